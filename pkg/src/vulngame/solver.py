"""Exact strategy solving for the coverage commitment game.

`solve_stackelberg` enumerates joint path-assignment profiles (one attacked
path per attacker type).  With the assignment fixed, attacker incentive
constraints and the defender objective are both linear in coverage, so each
profile reduces to one small LP solved in exact rational arithmetic.  The
best profile over all enumerations is the defender-optimal commitment with
defender-favorable tie-breaking.

`solve_grid_oracle` is an independent route to the same answer: exhaustive
evaluation of the expected defender utility over a delta-lattice of
budget-feasible coverage vectors.  It exists so the LP path can be checked
against brute force on small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleError, InvariantViolation
from .game import (
    TIE_TOL,
    Coverage,
    GameInstance,
    attacker_utility,
    best_response,
    expected_defender_utility,
)
from .simplex import GEQ, LEQ, solve_lp_max

GRID_POINT_CAP = 10_000_000
PROFILE_CAP = 200_000


@dataclass(frozen=True)
class SolverConfig:
    lp_tolerance: float = 1e-7
    grid_delta: float = 0.05
    big_m: float | None = None   # None = derive from utility ranges


@dataclass(frozen=True)
class Solution:
    coverage: Coverage
    attacked_path: dict[int, int]   # type id -> path index
    objective: float
    status: str                     # "optimal" | "infeasible"
    profiles_evaluated: int = 0


def _coef_tables(game: GameInstance):
    """Per (vertex, type) linear coefficients of both utilities in coverage.

    defender term: c * dcov + dunc * (1 - c)  ->  slope (dcov + dunc), const -dunc... kept split
    attacker term: rew - c * k, with k = rho * (reward + deterrence)
    """
    dcov: dict[tuple[int, int], float] = {}
    dunc: dict[tuple[int, int], float] = {}
    arew: dict[tuple[int, int], float] = {}
    ak: dict[tuple[int, int], float] = {}
    for t in game.types:
        for vid in game.payload_vertices:
            vx = game.graph.vertex(vid)
            dcov[(vid, t.id)] = (
                game.v_bug[vid] * game.rho_f[vid] * game.eta_ver
                - game.lambda_fp * game.fp_cost_f[vid]
            )
            dunc[(vid, t.id)] = -t.impact(vx.cvss_score) * game.impact_weight(vid)
            arew[(vid, t.id)] = t.reward(vx.cvss_score)
            ak[(vid, t.id)] = game.rho_f[vid] * (t.reward(vx.cvss_score) + t.deterrence())
    return dcov, dunc, arew, ak


def compute_big_m(game: GameInstance) -> float:
    """Bound on any attacker utility swing achievable by coverage changes."""
    _, _, _, ak = _coef_tables(game)
    worst = 0.0
    for t in game.types:
        for path in game.paths:
            span = sum(ak[(vid, t.id)] for vid in game.path_nongoal(path))
            worst = max(worst, span)
    return worst + 1.0


def solve_stackelberg(game: GameInstance, cfg: SolverConfig | None = None) -> Solution:
    """Defender-optimal commitment via profile enumeration, exact per-profile LPs."""
    cfg = cfg or SolverConfig()
    payload = list(game.payload_vertices)
    n = len(payload)
    col = {vid: j for j, vid in enumerate(payload)}
    n_paths = len(game.paths)
    n_profiles = n_paths ** len(game.types)
    if n_profiles > PROFILE_CAP:
        raise InfeasibleError(
            f"{n_paths} paths and {len(game.types)} types give {n_profiles} profiles, "
            f"over the {PROFILE_CAP} cap"
        )

    dcov, dunc, arew, ak = _coef_tables(game)
    weights = [game.graph.vertex(v).cost_w for v in payload]

    path_members = [set(game.path_nongoal(p)) for p in game.paths]
    path_rew = {
        (i, t.id): sum(arew[(vid, t.id)] for vid in game.path_nongoal(game.paths[i]))
        for i in range(n_paths)
        for t in game.types
    }

    best_obj = None
    best_x = None
    evaluated = 0
    for profile in itertools.product(range(n_paths), repeat=len(game.types)):
        evaluated += 1
        objective = [0.0] * n
        const = 0.0
        rows: list[tuple[list[float], str, float]] = []
        for t, assigned in zip(game.types, profile):
            for vid in game.path_nongoal(game.paths[assigned]):
                j = col[vid]
                objective[j] += t.prior_p * (dcov[(vid, t.id)] - dunc[(vid, t.id)])
                const += t.prior_p * dunc[(vid, t.id)]
            # Incentive rows: assigned path at least as attractive as every rival.
            for rival in range(n_paths):
                if rival == assigned:
                    continue
                coeffs = [0.0] * n
                for vid in path_members[rival]:
                    coeffs[col[vid]] += ak[(vid, t.id)]
                for vid in path_members[assigned]:
                    coeffs[col[vid]] -= ak[(vid, t.id)]
                rhs = path_rew[(rival, t.id)] - path_rew[(assigned, t.id)]
                rows.append((coeffs, GEQ, rhs))
        rows.append((weights, LEQ, game.budget))
        for j in range(n):
            unit = [0.0] * n
            unit[j] = 1.0
            rows.append((unit, LEQ, 1.0))

        result = solve_lp_max(objective, rows)
        if result.status != "optimal":
            continue
        total = float(result.objective) + const
        if best_obj is None or total > best_obj + 1e-15:
            best_obj = total
            best_x = result.x

    if best_x is None:
        # Every profile infeasible can only happen on numerically broken input.
        return Solution(coverage={}, attacked_path={}, objective=float("nan"),
                        status="infeasible", profiles_evaluated=evaluated)

    coverage = {vid: min(1.0, max(0.0, float(best_x[col[vid]]))) for vid in payload}
    attacked = {t.id: best_response(game, coverage, t) for t in game.types}
    objective = expected_defender_utility(game, coverage)
    if abs(objective - best_obj) > max(1.0, abs(best_obj)) * cfg.lp_tolerance + cfg.lp_tolerance:
        raise InvariantViolation(
            f"commitment value {objective} disagrees with LP optimum {best_obj}"
        )
    for t in game.types:
        au_star = attacker_utility(game, coverage, game.paths[attacked[t.id]], t)
        for i in range(n_paths):
            if attacker_utility(game, coverage, game.paths[i], t) > au_star + cfg.lp_tolerance:
                raise InvariantViolation("attacked path is not an attacker best response")
    return Solution(
        coverage=coverage,
        attacked_path=attacked,
        objective=objective,
        status="optimal",
        profiles_evaluated=evaluated,
    )


def lattice_values(delta: float) -> np.ndarray:
    if not (0.0 < delta <= 0.5):
        raise ConfigError(f"grid delta must be in (0, 0.5], got {delta}")
    k = int(math.floor(1.0 / delta + 1e-9))
    return np.arange(k + 1, dtype=float) * delta


def feasible_lattice(weights: list[float], budget: float, delta: float,
                     cap: int = GRID_POINT_CAP) -> np.ndarray:
    """All delta-lattice coverage vectors with sum w*c <= budget, as an array.

    Rows are ordered lexicographically (last coordinate fastest).
    """
    values = lattice_values(delta)
    n = len(weights)
    total = len(values) ** n
    if total > cap:
        raise InfeasibleError(f"lattice would hold {total} points, over the {cap} cap")
    if n == 0:
        return np.zeros((1, 0))
    grids = np.meshgrid(*([values] * n), indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    cost = points @ np.asarray(weights, dtype=float)
    return points[cost <= budget + 1e-9]


def solve_grid_oracle(game: GameInstance, cfg: SolverConfig | None = None) -> Solution:
    """Exhaustive search over the coverage lattice; vectorized inner loop.

    The evaluation mirrors expected_defender_utility: per type, attacker picks
    its utility-maximal path, exact ties resolve toward the defender.
    """
    cfg = cfg or SolverConfig()
    payload = list(game.payload_vertices)
    weights = [game.graph.vertex(v).cost_w for v in payload]
    points = feasible_lattice(weights, game.budget, cfg.grid_delta)
    if len(points) == 0:
        raise InfeasibleError("no budget-feasible lattice point")

    dcov, dunc, arew, ak = _coef_tables(game)
    n_paths = len(game.paths)
    col = {vid: j for j, vid in enumerate(payload)}

    expected = np.zeros(len(points))
    for t in game.types:
        au = np.zeros((len(points), n_paths))
        du = np.zeros((len(points), n_paths))
        for i, path in enumerate(game.paths):
            a_slope = np.zeros(len(payload))
            d_slope = np.zeros(len(payload))
            a_const = 0.0
            d_const = 0.0
            for vid in game.path_nongoal(path):
                a_slope[col[vid]] -= ak[(vid, t.id)]
                d_slope[col[vid]] += dcov[(vid, t.id)] - dunc[(vid, t.id)]
                a_const += arew[(vid, t.id)]
                d_const += dunc[(vid, t.id)]
            au[:, i] = points @ a_slope + a_const
            du[:, i] = points @ d_slope + d_const
        top = au.max(axis=1)
        tied = au >= top[:, None] - TIE_TOL
        du_best = np.where(tied, du, -np.inf).max(axis=1)
        expected += t.prior_p * du_best

    best = int(np.argmax(expected))
    coverage = {vid: float(points[best, col[vid]]) for vid in payload}
    attacked = {t.id: best_response(game, coverage, t) for t in game.types}
    return Solution(
        coverage=coverage,
        attacked_path=attacked,
        objective=float(expected[best]),
        status="optimal",
        profiles_evaluated=len(points),
    )


def grid_gap_bound(game: GameInstance, delta: float) -> float:
    """Analytic slack between the exact optimum and the best lattice point:
    2 * (max |per-vertex utility coefficient|) * delta * n."""
    dcov, dunc, arew, ak = _coef_tables(game)
    biggest = 0.0
    for table in (dcov, dunc, arew, ak):
        for val in table.values():
            biggest = max(biggest, abs(val))
    return 2.0 * biggest * delta * len(game.payload_vertices)


def uniform_coverage(game: GameInstance) -> Coverage:
    """Budget-feasible equal coverage over the payload vertices."""
    payload = list(game.payload_vertices)
    total_w = sum(game.graph.vertex(v).cost_w for v in payload)
    if total_w <= 0:
        return {v: 0.0 for v in payload}
    level = min(1.0, game.budget / total_w)
    return {v: level for v in payload}
