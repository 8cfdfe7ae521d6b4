"""Leader-follower coverage game over an attack graph.

The defender commits to a coverage vector c over vertices under a budget
constraint sum_f w_f * c_f <= B.  Each attacker type observes c and picks the
attack path that maximizes its own utility.  Utilities are additive over the
non-goal vertices of the chosen path:

    defender:  c_f * (v_bug * rho * eta - lambda_fp * fp_cost) - (1 - c_f) * impact
    attacker:  (1 - c_f * rho) * reward - c_f * rho * deterrence

Ties in the attacker's choice resolve in the defender's favor (strong
commitment semantics), then toward the lowest path index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import BudgetError, ConfigError, FormatError
from .graph import AttackGraph, AttackPath, VertexKind, path_is_valid

Coverage = dict[int, float]

# Attacker utilities within this absolute slack count as tied; ties resolve in
# the defender's favor.  Keeps strong-commitment tie-breaking stable once exact
# rational LP answers are converted to floats.
TIE_TOL = 1e-9


class MethodId(Enum):
    CODEQL = "codeql"
    FUZZ = "fuzz"
    KASAN = "kasan"
    KCSAN = "kcsan"
    PATCHMINE = "patchmine"
    VERIFY = "verify"


METHOD_ORDER = (
    MethodId.CODEQL,
    MethodId.FUZZ,
    MethodId.KASAN,
    MethodId.KCSAN,
    MethodId.PATCHMINE,
    MethodId.VERIFY,
)

EXECUTOR_METHODS = tuple(m for m in METHOD_ORDER if m is not MethodId.VERIFY)


@dataclass(frozen=True)
class AttackerType:
    id: int
    label: str
    prior_p: float
    reward_scale: float
    deterrence_scale: float
    impact_scale: float

    def reward(self, cvss: float) -> float:
        return cvss * self.reward_scale

    def deterrence(self) -> float:
        return self.deterrence_scale

    def impact(self, cvss: float) -> float:
        return cvss * self.impact_scale


@dataclass(frozen=True)
class DefenderParams:
    lambda_fp: float
    eta_ver: float
    # Planning-model detection rates per (method value, class id).
    rho_by_class: dict[tuple[str, int], float]
    fp_cost: dict[str, float]

    def rho(self, method: MethodId, class_id: int) -> float:
        return self.rho_by_class[(method.value, class_id)]


@dataclass(frozen=True)
class GameInstance:
    graph: AttackGraph
    types: tuple[AttackerType, ...]
    paths: tuple[AttackPath, ...]
    budget: float
    lambda_fp: float
    eta_ver: float
    # Per-vertex derived tables, indexed by vertex id.
    v_bug: dict[int, float]
    rho_f: dict[int, float]         # detection rate of the vertex's designated method
    fp_cost_f: dict[int, float]
    method_for_vertex: dict[int, MethodId]
    # Optional per-vertex multiplier on the uncovered-impact term; vertices
    # absent from the dict count as 1.0.  The planner uses it to discount the
    # breach impact of vertices it believes are clean.
    impact_w: dict[int, float] = field(default_factory=dict)
    _payload: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for p in self.paths:
            for vid in p.vertex_ids:
                if self.graph.vertex(vid).kind is not VertexKind.GOAL:
                    seen.add(vid)
        object.__setattr__(self, "_payload", tuple(sorted(seen)))

    @property
    def payload_vertices(self) -> tuple[int, ...]:
        """Non-goal vertices appearing on at least one path; the coverage support."""
        return self._payload

    def path_nongoal(self, path: AttackPath) -> list[int]:
        return [v for v in path.vertex_ids if self.graph.vertex(v).kind is not VertexKind.GOAL]

    def impact_weight(self, vid: int) -> float:
        return self.impact_w.get(vid, 1.0)


def validate_game(game: GameInstance, require_graph_paths: bool = True) -> None:
    if not game.types:
        raise ConfigError("game needs at least one attacker type")
    total = sum(t.prior_p for t in game.types)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"type priors must sum to 1, got {total}")
    for t in game.types:
        if t.prior_p < 0:
            raise ConfigError(f"type {t.label!r} has negative prior")
    if not game.paths:
        raise ConfigError("game needs at least one attack path")
    if require_graph_paths:
        for i, p in enumerate(game.paths):
            if not path_is_valid(game.graph, p):
                raise ConfigError(f"path {i} is not a valid entry-to-goal path in the graph")
    if game.budget < 0:
        raise ConfigError("budget must be non-negative")
    for vid in game.payload_vertices:
        for table, name in (
            (game.v_bug, "v_bug"),
            (game.rho_f, "rho_f"),
            (game.fp_cost_f, "fp_cost_f"),
            (game.method_for_vertex, "method_for_vertex"),
        ):
            if vid not in table:
                raise ConfigError(f"{name} missing entry for vertex {vid}")


def coverage_cost(game: GameInstance, coverage: Coverage) -> float:
    return sum(game.graph.vertex(v).cost_w * c for v, c in coverage.items())


def check_coverage(game: GameInstance, coverage: Coverage, tol: float = 1e-9) -> None:
    for v, c in coverage.items():
        if not game.graph.has_vertex(v):
            raise ConfigError(f"coverage references missing vertex {v}")
        if c < -tol or c > 1.0 + tol:
            raise ConfigError(f"coverage for vertex {v} outside [0, 1]: {c}")
    cost = coverage_cost(game, coverage)
    if cost > game.budget + tol:
        raise BudgetError(f"coverage cost {cost} exceeds budget {game.budget}")


def defender_utility(game: GameInstance, coverage: Coverage, path: AttackPath,
                     type_: AttackerType) -> float:
    """Defender payoff when this attacker type traverses the given path."""
    total = 0.0
    for vid in game.path_nongoal(path):
        c = coverage.get(vid, 0.0)
        vx = game.graph.vertex(vid)
        gain = game.v_bug[vid] * game.rho_f[vid] * game.eta_ver - game.lambda_fp * game.fp_cost_f[vid]
        total += c * gain - (1.0 - c) * type_.impact(vx.cvss_score) * game.impact_weight(vid)
    return total


def attacker_utility(game: GameInstance, coverage: Coverage, path: AttackPath,
                     type_: AttackerType) -> float:
    """Attacker payoff for traversing the path under defender coverage."""
    total = 0.0
    for vid in game.path_nongoal(path):
        c = coverage.get(vid, 0.0)
        vx = game.graph.vertex(vid)
        detect = c * game.rho_f[vid]
        total += (1.0 - detect) * type_.reward(vx.cvss_score) - detect * type_.deterrence()
    return total


def best_response(game: GameInstance, coverage: Coverage, type_: AttackerType,
                  path_indices: list[int] | None = None) -> int:
    """Index of the path this type attacks.

    The attacker maximizes its own utility; exact ties resolve to the path
    with the higher defender utility, then to the lowest index.
    """
    indices = path_indices if path_indices is not None else list(range(len(game.paths)))
    if not indices:
        raise ConfigError("best_response needs at least one candidate path")
    utilities = [(idx, attacker_utility(game, coverage, game.paths[idx], type_)) for idx in indices]
    top = max(au for _, au in utilities)
    best_idx = None
    best_du = None
    for idx, au in utilities:
        if au >= top - TIE_TOL:
            du = defender_utility(game, coverage, game.paths[idx], type_)
            if best_du is None or du > best_du:
                best_idx, best_du = idx, du
    return best_idx


def expected_defender_utility(game: GameInstance, coverage: Coverage,
                              path_indices: list[int] | None = None) -> float:
    """Defender value of committing to `coverage`: each type best-responds."""
    check_coverage(game, coverage)
    total = 0.0
    for t in game.types:
        idx = best_response(game, coverage, t, path_indices)
        total += t.prior_p * defender_utility(game, coverage, game.paths[idx], t)
    return total


# --- game parameter file ----------------------------------------------------

_TYPE_KEYS = {"label", "prior", "reward_scale", "deterrence_scale", "impact_scale"}
_DEFENDER_KEYS = {"lambda_fp", "eta_ver", "rho", "fp_cost"}
_TOP_KEYS = {"types", "defender", "budget"}


@dataclass(frozen=True)
class GameParams:
    """Parsed contents of a game parameter file, prior to graph binding."""

    types: tuple[AttackerType, ...]
    lambda_fp: float
    eta_ver: float
    rho_raw: dict[str, object]   # method value -> scalar or {class label: rho}
    fp_cost: dict[str, float]
    budget: float


def _require_keys(obj: dict, required: set[str], what: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{what} must be an object, got {type(obj).__name__}")
    unknown = set(obj) - required
    missing = required - set(obj)
    if unknown:
        raise FormatError(f"{what} has unknown keys: {sorted(unknown)}")
    if missing:
        raise FormatError(f"{what} is missing keys: {sorted(missing)}")


def params_from_dict(data: dict) -> GameParams:
    _require_keys(data, _TOP_KEYS, "game document")
    types = []
    for i, item in enumerate(data["types"]):
        _require_keys(item, _TYPE_KEYS, f"type entry {i}")
        types.append(
            AttackerType(
                id=i,
                label=str(item["label"]),
                prior_p=float(item["prior"]),
                reward_scale=float(item["reward_scale"]),
                deterrence_scale=float(item["deterrence_scale"]),
                impact_scale=float(item["impact_scale"]),
            )
        )
    if not types:
        raise FormatError("game document defines no attacker types")
    total = sum(t.prior_p for t in types)
    if abs(total - 1.0) > 1e-9:
        raise FormatError(f"type priors must sum to 1, got {total}")
    d = data["defender"]
    _require_keys(d, _DEFENDER_KEYS, "defender block")
    rho_raw = d["rho"]
    if not isinstance(rho_raw, dict):
        raise FormatError("defender.rho must map method names to rates")
    known = {m.value for m in MethodId}
    for name in rho_raw:
        if name not in known:
            raise FormatError(f"defender.rho has unknown method {name!r}")
    fp_cost = {}
    for name, val in d["fp_cost"].items():
        if name not in known:
            raise FormatError(f"defender.fp_cost has unknown method {name!r}")
        fp_cost[name] = float(val)
    return GameParams(
        types=tuple(types),
        lambda_fp=float(d["lambda_fp"]),
        eta_ver=float(d["eta_ver"]),
        rho_raw=dict(rho_raw),
        fp_cost=fp_cost,
        budget=float(data["budget"]),
    )


def params_to_dict(params: GameParams) -> dict:
    return {
        "types": [
            {
                "label": t.label,
                "prior": t.prior_p,
                "reward_scale": t.reward_scale,
                "deterrence_scale": t.deterrence_scale,
                "impact_scale": t.impact_scale,
            }
            for t in params.types
        ],
        "defender": {
            "lambda_fp": params.lambda_fp,
            "eta_ver": params.eta_ver,
            "rho": params.rho_raw,
            "fp_cost": params.fp_cost,
        },
        "budget": params.budget,
    }


def load_game_params(path: str) -> GameParams:
    with open(path, encoding="utf8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"game file is not valid JSON: {exc}") from None
    return params_from_dict(data)


def save_game_params(params: GameParams, path: str) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(params_to_dict(params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_rho_table(params: GameParams, graph: AttackGraph) -> dict[tuple[str, int], float]:
    """Expand the file's per-method rho spec against the graph's class list."""
    label_to_id = {c.label: c.id for c in graph.classes}
    table: dict[tuple[str, int], float] = {}
    for method, spec in params.rho_raw.items():
        if isinstance(spec, dict):
            for label, val in spec.items():
                if label not in label_to_id:
                    raise ConfigError(f"rho for {method} names unknown class {label!r}")
                table[(method, label_to_id[label])] = float(val)
            missing = [c.label for c in graph.classes if (method, c.id) not in table]
            if missing:
                raise ConfigError(f"rho for {method} missing classes: {missing}")
        else:
            for c in graph.classes:
                table[(method, c.id)] = float(spec)
    for method in (m.value for m in EXECUTOR_METHODS):
        if not any(k[0] == method for k in table):
            raise ConfigError(f"game file gives no rho entries for method {method!r}")
    for key, val in table.items():
        if not (0.0 <= val <= 1.0):
            raise ConfigError(f"rho{key} = {val} outside [0, 1]")
    return table


def build_game_instance(graph: AttackGraph, params: GameParams,
                        paths: tuple[AttackPath, ...] | None = None,
                        max_paths: int = 64,
                        budget: float | None = None) -> GameInstance:
    """Bind parameter tables to a graph.

    Per vertex, the designated analysis method is the executor with the best
    prior-weighted detection rate over the vertex's class mix, and v_bug is
    severity times reachability.
    """
    from .graph import enumerate_paths  # local import keeps module load light

    rho_table = resolve_rho_table(params, graph)
    if paths is None:
        paths = tuple(enumerate_paths(graph, max_paths=max_paths))
    if not paths:
        raise ConfigError("graph admits no entry-to-goal path")

    v_bug: dict[int, float] = {}
    rho_f: dict[int, float] = {}
    fp_cost_f: dict[int, float] = {}
    method_for_vertex: dict[int, MethodId] = {}
    for v in graph.vertices:
        if v.kind is VertexKind.GOAL:
            continue
        phi_sum = sum(v.phi)
        best_m, best_rho = None, -1.0
        for m in EXECUTOR_METHODS:
            if phi_sum > 0:
                rate = sum(v.phi[c.id] * rho_table[(m.value, c.id)] for c in graph.classes) / phi_sum
            else:
                rate = sum(rho_table[(m.value, c.id)] for c in graph.classes) / len(graph.classes)
            if rate > best_rho:
                best_m, best_rho = m, rate
        v_bug[v.id] = v.cvss_score * v.reachability
        rho_f[v.id] = best_rho
        method_for_vertex[v.id] = best_m
        fp_cost_f[v.id] = params.fp_cost.get(best_m.value, 1.0)

    game = GameInstance(
        graph=graph,
        types=params.types,
        paths=tuple(paths),
        budget=params.budget if budget is None else float(budget),
        lambda_fp=params.lambda_fp,
        eta_ver=params.eta_ver,
        v_bug=v_bug,
        rho_f=rho_f,
        fp_cost_f=fp_cost_f,
        method_for_vertex=method_for_vertex,
    )
    validate_game(game)
    return game
