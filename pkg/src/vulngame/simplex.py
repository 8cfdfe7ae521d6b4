"""Small dense LP solver over exact rational arithmetic.

Solves maximize c.x subject to rows of the form a.x <= b or a.x >= b with
x >= 0, via the two-phase simplex method with Bland's rule.  Inputs may be
floats (converted exactly to Fraction), so the only approximation in the
whole pipeline is the final conversion back to float.  Instances here are
tiny (tens of variables and rows), so robustness beats speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import InvariantViolation

LEQ = "<="
GEQ = ">="

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass
class LpResult:
    status: str                 # "optimal" | "infeasible" | "unbounded"
    objective: Fraction | None
    x: list[Fraction] | None


def _frac(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


def solve_lp_max(objective: Sequence, rows: Sequence[tuple[Sequence, str, object]]) -> LpResult:
    """Maximize objective.x over x >= 0 subject to the given rows."""
    n = len(objective)
    obj = [_frac(v) for v in objective]

    # Normalize every row to a.x <= b or a.x >= b with b >= 0, then to
    # equalities with slack/surplus and (where needed) artificial variables.
    norm: list[tuple[list[Fraction], str, Fraction]] = []
    for coeffs, sense, rhs in rows:
        if len(coeffs) != n:
            raise ValueError("constraint arity mismatch")
        a = [_frac(v) for v in coeffs]
        b = _frac(rhs)
        if sense not in (LEQ, GEQ):
            raise ValueError(f"unknown constraint sense {sense!r}")
        if b < 0:
            a = [-v for v in a]
            b = -b
            sense = GEQ if sense == LEQ else LEQ
        norm.append((a, sense, b))

    m = len(norm)
    slack_cols = m                       # one slack or surplus per row
    art_rows = [i for i, (_, sense, _) in enumerate(norm) if sense == GEQ]
    art_cols = len(art_rows)
    width = n + slack_cols + art_cols

    # tableau[i] = row of coefficients + rhs in the last position
    tableau: list[list[Fraction]] = []
    basis: list[int] = []
    art_index = {}
    for j, i in enumerate(art_rows):
        art_index[i] = n + slack_cols + j
    for i, (a, sense, b) in enumerate(norm):
        row = a + [_ZERO] * (slack_cols + art_cols) + [b]
        if sense == LEQ:
            row[n + i] = _ONE
            basis.append(n + i)
        else:
            row[n + i] = -_ONE            # surplus
            row[art_index[i]] = _ONE      # artificial
            basis.append(art_index[i])
        tableau.append(row)

    def pivot(row_i: int, col_j: int) -> None:
        piv = tableau[row_i][col_j]
        inv = _ONE / piv
        tableau[row_i] = [v * inv for v in tableau[row_i]]
        prow = tableau[row_i]
        for i in range(m):
            if i == row_i:
                continue
            factor = tableau[i][col_j]
            if factor != 0:
                tableau[i] = [v - factor * p for v, p in zip(tableau[i], prow)]
        basis[row_i] = col_j

    def run_simplex(costs: list[Fraction], allowed: int) -> None:
        """Maximize costs.x over the current tableau (Bland's rule)."""
        while True:
            # reduced costs: costs[j] - costs_B . column_j
            z = [costs[basis[i]] for i in range(m)]
            entering = -1
            for j in range(allowed):
                red = costs[j] - sum(z[i] * tableau[i][j] for i in range(m))
                if red > 0:
                    entering = j
                    break
            if entering < 0:
                return
            leaving = -1
            best_ratio = None
            for i in range(m):
                aij = tableau[i][entering]
                if aij > 0:
                    ratio = tableau[i][-1] / aij
                    if best_ratio is None or ratio < best_ratio or (
                        ratio == best_ratio and basis[i] < basis[leaving]
                    ):
                        best_ratio = ratio
                        leaving = i
            if leaving < 0:
                raise _Unbounded()
            pivot(leaving, entering)

    class _Unbounded(Exception):
        pass

    try:
        if art_cols:
            phase1 = [_ZERO] * width
            for i in art_rows:
                phase1[art_index[i]] = -_ONE
            run_simplex(phase1, width)
            infeas = sum(tableau[i][-1] for i in range(m) if basis[i] >= n + slack_cols)
            if infeas > 0:
                return LpResult(status="infeasible", objective=None, x=None)
            # Drive any artificial still in the basis out at value zero.
            for i in range(m):
                if basis[i] >= n + slack_cols:
                    for j in range(n + slack_cols):
                        if tableau[i][j] != 0:
                            pivot(i, j)
                            break

        phase2 = obj + [_ZERO] * (slack_cols + art_cols)
        # Forbid re-entry of artificial columns.
        run_simplex(phase2, n + slack_cols)
    except _Unbounded:
        return LpResult(status="unbounded", objective=None, x=None)

    x = [_ZERO] * n
    for i, b in enumerate(basis):
        if b < n:
            x[b] = tableau[i][-1]
    value = sum(o * v for o, v in zip(obj, x))
    for i in range(m):
        if tableau[i][-1] < 0:
            raise InvariantViolation("simplex produced a negative basic value")
    return LpResult(status="optimal", objective=value, x=x)
