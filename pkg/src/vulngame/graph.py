"""Synthetic intra-kernel attack graphs.

A graph is a DAG over typed vertices (entry points, internal functions,
privilege boundaries, goals).  Each non-goal vertex carries per-class
vulnerability priors phi, each edge an exploitability weight psi.  The module
provides validation, reach-probability math, path enumeration, a seeded
synthetic generator, ground-truth planting, and a strict JSON file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConfigError, FormatError
from .rng import stream


class VertexKind(Enum):
    ENTRY = "entry"
    FUNC = "func"
    PRIV = "priv"
    GOAL = "goal"


# Layer rank used by the generator and by feature embeddings.
_KIND_ORDER = {
    VertexKind.ENTRY: 0,
    VertexKind.FUNC: 1,
    VertexKind.PRIV: 2,
    VertexKind.GOAL: 3,
}

# Ordered so consecutive prefixes cycle through distinct weakness families
# (memory corruption, data race, logic/input handling, then around again).
_DEFAULT_CLASS_LABELS = (
    "CWE-787",
    "CWE-362",
    "CWE-190",
    "CWE-416",
    "CWE-20",
    "CWE-476",
    "CWE-400",
    "CWE-125",
)


@dataclass(frozen=True)
class VulnClass:
    id: int
    label: str
    cvss_base: float


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: VertexKind
    phi: tuple[float, ...]  # per-class vulnerability prior, all zero for goals
    cost_w: float
    cvss_score: float
    churn: float
    reachability: float


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    psi: float  # exploitability of the transition


@dataclass(frozen=True)
class AttackPath:
    """Vertex-id sequence from an entry to a goal."""

    vertex_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.vertex_ids)


@dataclass(frozen=True)
class GroundTruth:
    """Planted latent state: the set of truly vulnerable (vertex, class) cells."""

    vuln: frozenset[tuple[int, int]]

    def __contains__(self, cell: tuple[int, int]) -> bool:
        return cell in self.vuln


@dataclass(frozen=True)
class AttackGraph:
    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    classes: tuple[VulnClass, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)
    _adj: dict = field(init=False, repr=False, compare=False)
    _psi: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id = {v.id: v for v in self.vertices}
        adj: dict[int, list[int]] = {v.id: [] for v in self.vertices}
        psi = {}
        for e in self.edges:
            if e.src in adj:
                adj[e.src].append(e.dst)
            psi[(e.src, e.dst)] = e.psi
        for targets in adj.values():
            targets.sort()
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_adj", adj)
        object.__setattr__(self, "_psi", psi)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def vertex(self, vid: int) -> Vertex:
        return self._by_id[vid]

    def has_vertex(self, vid: int) -> bool:
        return vid in self._by_id

    def out_neighbors(self, vid: int) -> list[int]:
        return self._adj.get(vid, [])

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self._psi

    def psi(self, src: int, dst: int) -> float:
        try:
            return self._psi[(src, dst)]
        except KeyError:
            raise InvalidPathError(f"no edge {src} -> {dst}") from None

    def ids_of_kind(self, kind: VertexKind) -> list[int]:
        return [v.id for v in self.vertices if v.kind is kind]

    def nongoal_ids(self) -> list[int]:
        return [v.id for v in self.vertices if v.kind is not VertexKind.GOAL]


class InvalidPathError(ValueError):
    """A vertex sequence is not a path in the graph."""


@dataclass(frozen=True)
class GeneratorConfig:
    n_entry: int = 3
    n_func: int = 8
    n_priv: int = 2
    n_goal: int = 1
    edge_density: float = 0.35
    phi_range: tuple[float, float] = (0.05, 0.4)
    psi_range: tuple[float, float] = (0.55, 0.95)
    n_classes: int = 3
    seed: int = 0
    # Metadata ranges; kept configurable but with sensible defaults.
    cvss_range: tuple[float, float] = (2.0, 9.8)
    churn_range: tuple[float, float] = (0.0, 1.0)
    reachability_range: tuple[float, float] = (0.2, 1.0)
    cost_range: tuple[float, float] = (0.5, 2.0)
    # How strongly latent-weakness priors tilt toward severe, reachable
    # vertices (0 = independent of the other metadata).  Hot, reachable code
    # accumulates more of the weaknesses worth modeling, so the default
    # couples them.
    phi_value_coupling: float = 0.7


def _check_range(name: str, rng_pair: Sequence[float], lo: float, hi: float) -> list[str]:
    problems = []
    if len(rng_pair) != 2 or rng_pair[0] > rng_pair[1]:
        problems.append(f"{name} range must be (low, high) with low <= high, got {rng_pair!r}")
    else:
        if rng_pair[0] < lo or rng_pair[1] > hi:
            problems.append(f"{name} range {rng_pair!r} outside [{lo}, {hi}]")
    return problems


def validate_generator_config(cfg: GeneratorConfig) -> None:
    problems = []
    if cfg.n_entry < 1:
        problems.append("need at least one entry vertex")
    if cfg.n_goal < 1:
        problems.append("need at least one goal vertex")
    if cfg.n_func < 0 or cfg.n_priv < 0:
        problems.append("layer sizes must be non-negative")
    if not (0.0 < cfg.edge_density <= 1.0):
        problems.append(f"edge_density must be in (0, 1], got {cfg.edge_density}")
    if cfg.n_classes < 1:
        problems.append("n_classes must be >= 1")
    problems += _check_range("phi", cfg.phi_range, 0.0, 1.0)
    problems += _check_range("psi", cfg.psi_range, 0.0, 1.0)
    problems += _check_range("cvss", cfg.cvss_range, 0.0, 10.0)
    problems += _check_range("churn", cfg.churn_range, 0.0, 1.0)
    problems += _check_range("reachability", cfg.reachability_range, 0.0, 1.0)
    if cfg.cost_range[0] <= 0 or cfg.cost_range[0] > cfg.cost_range[1]:
        problems.append(f"cost range must be positive and ordered, got {cfg.cost_range!r}")
    if problems:
        raise ConfigError("; ".join(problems))


def validate_graph(g: AttackGraph) -> list[str]:
    """Return a list of invariant violations; empty means the graph is valid."""
    problems: list[str] = []
    n = len(g.vertices)
    ids = [v.id for v in g.vertices]
    if sorted(ids) != list(range(n)):
        problems.append("vertex ids must be exactly 0..n-1 with no duplicates")
    k = len(g.classes)
    class_ids = [c.id for c in g.classes]
    if sorted(class_ids) != list(range(k)):
        problems.append("class ids must be exactly 0..k-1 with no duplicates")
    for c in g.classes:
        if not (0.0 <= c.cvss_base <= 10.0):
            problems.append(f"class {c.id} cvss_base {c.cvss_base} outside [0, 10]")

    id_set = set(ids)
    for v in g.vertices:
        if len(v.phi) != k:
            problems.append(f"vertex {v.id} phi has length {len(v.phi)}, expected {k}")
        for p in v.phi:
            if not (0.0 <= p <= 1.0):
                problems.append(f"vertex {v.id} phi value {p} outside [0, 1]")
        if v.kind is VertexKind.GOAL and any(p != 0.0 for p in v.phi):
            problems.append(f"goal vertex {v.id} must have all-zero phi")
        if v.cost_w <= 0:
            problems.append(f"vertex {v.id} cost_w must be positive, got {v.cost_w}")
        if not (0.0 <= v.cvss_score <= 10.0):
            problems.append(f"vertex {v.id} cvss {v.cvss_score} outside [0, 10]")
        if not (0.0 <= v.churn):
            problems.append(f"vertex {v.id} churn must be non-negative")
        if not (0.0 <= v.reachability <= 1.0):
            problems.append(f"vertex {v.id} reachability outside [0, 1]")

    seen_edges = set()
    for e in g.edges:
        if e.src == e.dst:
            problems.append(f"self-loop on vertex {e.src}")
        if e.src not in id_set or e.dst not in id_set:
            problems.append(f"edge ({e.src}, {e.dst}) references a missing vertex")
            continue
        if (e.src, e.dst) in seen_edges:
            problems.append(f"duplicate edge ({e.src}, {e.dst})")
        seen_edges.add((e.src, e.dst))
        if not (0.0 <= e.psi <= 1.0):
            problems.append(f"edge ({e.src}, {e.dst}) psi {e.psi} outside [0, 1]")

    # Cycle check via Kahn's algorithm on the well-formed part of the edge set.
    indeg = {i: 0 for i in id_set}
    adj: dict[int, list[int]] = {i: [] for i in id_set}
    for src, dst in seen_edges:
        adj[src].append(dst)
        indeg[dst] += 1
    queue = [i for i in sorted(id_set) if indeg[i] == 0]
    visited = 0
    while queue:
        u = queue.pop()
        visited += 1
        for w in adj[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if visited != len(id_set):
        problems.append("graph contains a cycle")
    else:
        reached = _reachable_from(g, [v.id for v in g.vertices if v.kind is VertexKind.ENTRY], adj)
        for v in g.vertices:
            if v.kind is VertexKind.GOAL and v.id not in reached:
                problems.append(f"goal vertex {v.id} unreachable from every entry")
    return problems


def _reachable_from(g: AttackGraph, starts: Iterable[int], adj: dict[int, list[int]]) -> set[int]:
    seen = set(starts)
    frontier = list(seen)
    while frontier:
        u = frontier.pop()
        for w in adj.get(u, []):
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def entry_reachable_ids(g: AttackGraph) -> list[int]:
    """Sorted ids of vertices reachable from any entry (entries included)."""
    adj = {v.id: g.out_neighbors(v.id) for v in g.vertices}
    return sorted(_reachable_from(g, g.ids_of_kind(VertexKind.ENTRY), adj))


def vertex_presence_prob(vertex: Vertex) -> float:
    """Probability at least one vulnerability class is present at the vertex."""
    return 1.0 - math.prod(1.0 - p for p in vertex.phi)


def path_reach_probability(g: AttackGraph, path: AttackPath) -> float:
    """Probability the path is traversable end to end.

    Each hop contributes its edge exploitability times the probability the hop's
    source vertex actually hosts some vulnerability.  The terminal goal vertex
    never appears as a hop source, so it contributes no presence factor.
    """
    seq = path.vertex_ids
    if len(seq) < 2:
        raise InvalidPathError("a path needs at least two vertices")
    prob = 1.0
    for src, dst in zip(seq, seq[1:]):
        if not g.has_vertex(src) or not g.has_vertex(dst):
            raise InvalidPathError(f"path references missing vertex in hop {src} -> {dst}")
        prob *= g.psi(src, dst) * vertex_presence_prob(g.vertex(src))
    return prob


def path_is_valid(g: AttackGraph, path: AttackPath) -> bool:
    seq = path.vertex_ids
    if len(seq) < 2:
        return False
    if not all(g.has_vertex(v) for v in seq):
        return False
    if g.vertex(seq[0]).kind is not VertexKind.ENTRY:
        return False
    if g.vertex(seq[-1]).kind is not VertexKind.GOAL:
        return False
    return all(g.has_edge(a, b) for a, b in zip(seq, seq[1:]))


def enumerate_paths(g: AttackGraph, max_paths: int = 1000) -> list[AttackPath]:
    """All simple entry-to-goal paths, depth first in ascending vertex-id order.

    Enumeration stops once max_paths paths have been collected, so the result
    is always the lexicographically first max_paths paths.
    """
    if max_paths < 1:
        raise ConfigError("max_paths must be >= 1")
    goals = set(g.ids_of_kind(VertexKind.GOAL))
    paths: list[AttackPath] = []

    def walk(prefix: list[int], on_path: set[int]) -> bool:
        if len(paths) >= max_paths:
            return False
        here = prefix[-1]
        if here in goals:
            paths.append(AttackPath(tuple(prefix)))
            return len(paths) < max_paths
        for nxt in g.out_neighbors(here):
            if nxt in on_path:
                continue
            on_path.add(nxt)
            prefix.append(nxt)
            keep_going = walk(prefix, on_path)
            prefix.pop()
            on_path.remove(nxt)
            if not keep_going:
                return False
        return True

    for entry in sorted(g.ids_of_kind(VertexKind.ENTRY)):
        if not walk([entry], {entry}):
            break
    return paths


def generate_synthetic_graph(cfg: GeneratorConfig) -> AttackGraph:
    """Sample a layered DAG: entries feed functions, which feed privilege
    boundaries and goals.  A repair pass guarantees every goal is reachable."""
    validate_generator_config(cfg)
    rng = stream(cfg.seed, "graph")

    n = cfg.n_entry + cfg.n_func + cfg.n_priv + cfg.n_goal
    kinds: list[VertexKind] = (
        [VertexKind.ENTRY] * cfg.n_entry
        + [VertexKind.FUNC] * cfg.n_func
        + [VertexKind.PRIV] * cfg.n_priv
        + [VertexKind.GOAL] * cfg.n_goal
    )

    classes = tuple(
        VulnClass(
            id=i,
            label=_DEFAULT_CLASS_LABELS[i] if i < len(_DEFAULT_CLASS_LABELS) else f"CWE-X{i}",
            cvss_base=round(float(rng.uniform(4.0, 9.5)), 2),
        )
        for i in range(cfg.n_classes)
    )

    def sample(lo_hi: tuple[float, float]) -> float:
        return float(rng.uniform(lo_hi[0], lo_hi[1]))

    def span(lo_hi: tuple[float, float], x: float) -> float:
        lo, hi = lo_hi
        return (x - lo) / (hi - lo) if hi > lo else 0.5

    vertices = []
    for vid in range(n):
        kind = kinds[vid]
        cost_w = sample(cfg.cost_range)
        cvss = sample(cfg.cvss_range)
        churn = sample(cfg.churn_range)
        reach = sample(cfg.reachability_range)
        if kind is VertexKind.GOAL:
            phi = tuple(0.0 for _ in range(cfg.n_classes))
        else:
            kappa = cfg.phi_value_coupling
            value = math.sqrt(span(cfg.cvss_range, cvss) * span(cfg.reachability_range, reach))
            lo, hi = cfg.phi_range
            phi = tuple(
                lo + (hi - lo) * ((1.0 - kappa) * float(rng.uniform(0.0, 1.0)) + kappa * value)
                for _ in range(cfg.n_classes)
            )
        vertices.append(
            Vertex(
                id=vid,
                kind=kind,
                phi=phi,
                cost_w=cost_w,
                cvss_score=cvss,
                churn=churn,
                reachability=reach,
            )
        )

    def allowed(u: Vertex, w: Vertex) -> bool:
        a, b = u.kind, w.kind
        if a is VertexKind.ENTRY:
            if b is VertexKind.FUNC:
                return True
            if b is VertexKind.PRIV:
                return cfg.n_func == 0
            if b is VertexKind.GOAL:
                return cfg.n_func == 0 and cfg.n_priv == 0
            return False
        if a is VertexKind.FUNC:
            if b is VertexKind.FUNC:
                return u.id < w.id
            return b in (VertexKind.PRIV, VertexKind.GOAL)
        if a is VertexKind.PRIV:
            return b is VertexKind.GOAL
        return False

    edges: dict[tuple[int, int], float] = {}
    for u in vertices:
        for w in vertices:
            if u.id != w.id and allowed(u, w):
                if rng.random() < cfg.edge_density:
                    edges[(u.id, w.id)] = sample(cfg.psi_range)

    # Repair pass: give every goal a spine from some entry, reusing layer
    # representatives so repaired graphs stay layered.
    adj: dict[int, set[int]] = {v.id: set() for v in vertices}
    for (src, dst) in edges:
        adj[src].add(dst)

    def reaches_goal(goal_id: int) -> bool:
        seen = set(gid for gid in range(cfg.n_entry))
        frontier = list(seen)
        while frontier:
            u = frontier.pop()
            if u == goal_id:
                return True
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    frontier.append(w)
        return goal_id in seen

    func_lo = cfg.n_entry
    priv_lo = cfg.n_entry + cfg.n_func
    goal_lo = priv_lo + cfg.n_priv
    for goal_id in range(goal_lo, goal_lo + cfg.n_goal):
        if reaches_goal(goal_id):
            continue
        spine = [int(rng.integers(0, cfg.n_entry))]
        if cfg.n_func > 0:
            spine.append(func_lo + int(rng.integers(0, cfg.n_func)))
        if cfg.n_priv > 0:
            spine.append(priv_lo + int(rng.integers(0, cfg.n_priv)))
        spine.append(goal_id)
        for a, b in zip(spine, spine[1:]):
            if (a, b) not in edges:
                edges[(a, b)] = sample(cfg.psi_range)
                adj[a].add(b)

    def add_edge(a: int, b: int) -> None:
        if (a, b) not in edges:
            edges[(a, b)] = sample(cfg.psi_range)
            adj[a].add(b)

    # Second repair pass: strand no analysis target.  Every non-goal vertex
    # gets an inbound chain from an entry and an outbound chain to a goal, so
    # each one sits on at least one attack path (a function nobody calls, or
    # that calls nothing, is a sampling artifact rather than kernel shape).
    incoming = {v.id: 0 for v in vertices}
    for (_, dst) in edges:
        incoming[dst] += 1
    for vid in range(func_lo, func_lo + cfg.n_func):
        if incoming[vid] == 0:
            add_edge(int(rng.integers(0, cfg.n_entry)), vid)
    for vid in range(priv_lo, priv_lo + cfg.n_priv):
        if incoming[vid] == 0:
            if cfg.n_func > 0:
                add_edge(func_lo + int(rng.integers(0, cfg.n_func)), vid)
            else:
                add_edge(int(rng.integers(0, cfg.n_entry)), vid)
    for vid in range(priv_lo, priv_lo + cfg.n_priv):
        if not adj[vid]:
            add_edge(vid, goal_lo + int(rng.integers(0, cfg.n_goal)))
    for vid in range(func_lo, func_lo + cfg.n_func):
        if not adj[vid]:
            if cfg.n_priv > 0:
                add_edge(vid, priv_lo + int(rng.integers(0, cfg.n_priv)))
            else:
                add_edge(vid, goal_lo + int(rng.integers(0, cfg.n_goal)))
    for vid in range(cfg.n_entry):
        if not adj[vid]:
            if cfg.n_func > 0:
                add_edge(vid, func_lo + int(rng.integers(0, cfg.n_func)))
            elif cfg.n_priv > 0:
                add_edge(vid, priv_lo + int(rng.integers(0, cfg.n_priv)))
            else:
                add_edge(vid, goal_lo + int(rng.integers(0, cfg.n_goal)))

    edge_objs = tuple(Edge(src, dst, psi) for (src, dst), psi in sorted(edges.items()))
    graph = AttackGraph(vertices=tuple(vertices), edges=edge_objs, classes=classes)
    problems = validate_graph(graph)
    if problems:
        raise ConfigError("generated graph failed validation: " + "; ".join(problems))
    return graph


def plant_ground_truth(g: AttackGraph, seed: int) -> GroundTruth:
    """Sample the latent vulnerable set: each non-goal (vertex, class) cell is
    vulnerable independently with probability phi(vertex, class)."""
    rng = stream(seed, "truth")
    vuln = set()
    for v in g.vertices:
        if v.kind is VertexKind.GOAL:
            continue
        for cid in range(g.n_classes):
            if rng.random() < v.phi[cid]:
                vuln.add((v.id, cid))
    return GroundTruth(vuln=frozenset(vuln))


def mitigate_cell(g: AttackGraph, vertex_id: int, class_id: int) -> AttackGraph:
    """Zero the prior of one cell; drop the vertex's outgoing edges once no
    class can be present there any more.  Returns a new graph."""
    v = g.vertex(vertex_id)
    if class_id < 0 or class_id >= g.n_classes:
        raise ConfigError(f"class id {class_id} out of range")
    phi = list(v.phi)
    phi[class_id] = 0.0
    new_v = replace(v, phi=tuple(phi))
    vertices = tuple(new_v if x.id == vertex_id else x for x in g.vertices)
    edges = g.edges
    if vertex_presence_prob(new_v) == 0.0:
        edges = tuple(e for e in g.edges if e.src != vertex_id)
    return AttackGraph(vertices=vertices, edges=edges, classes=g.classes)


# --- JSON file format ------------------------------------------------------

_CLASS_KEYS = {"id", "label", "cvss_base"}
_VERTEX_KEYS = {"id", "kind", "phi", "cost_w", "cvss", "churn", "reachability"}
_EDGE_KEYS = {"src", "dst", "psi"}
_TOP_KEYS = {"classes", "vertices", "edges"}


def _require_keys(obj: dict, required: set[str], what: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{what} must be an object, got {type(obj).__name__}")
    keys = set(obj)
    unknown = keys - required
    missing = required - keys
    if unknown:
        raise FormatError(f"{what} has unknown keys: {sorted(unknown)}")
    if missing:
        raise FormatError(f"{what} is missing keys: {sorted(missing)}")


def graph_to_dict(g: AttackGraph) -> dict:
    return {
        "classes": [
            {"id": c.id, "label": c.label, "cvss_base": c.cvss_base} for c in g.classes
        ],
        "vertices": [
            {
                "id": v.id,
                "kind": v.kind.value,
                "phi": list(v.phi),
                "cost_w": v.cost_w,
                "cvss": v.cvss_score,
                "churn": v.churn,
                "reachability": v.reachability,
            }
            for v in g.vertices
        ],
        "edges": [{"src": e.src, "dst": e.dst, "psi": e.psi} for e in g.edges],
    }


def graph_from_dict(data: dict) -> AttackGraph:
    _require_keys(data, _TOP_KEYS, "graph document")
    classes = []
    for item in data["classes"]:
        _require_keys(item, _CLASS_KEYS, "class entry")
        classes.append(
            VulnClass(id=int(item["id"]), label=str(item["label"]), cvss_base=float(item["cvss_base"]))
        )
    vertices = []
    for item in data["vertices"]:
        _require_keys(item, _VERTEX_KEYS, "vertex entry")
        try:
            kind = VertexKind(item["kind"])
        except ValueError:
            raise FormatError(f"vertex {item.get('id')} has unknown kind {item['kind']!r}") from None
        vertices.append(
            Vertex(
                id=int(item["id"]),
                kind=kind,
                phi=tuple(float(p) for p in item["phi"]),
                cost_w=float(item["cost_w"]),
                cvss_score=float(item["cvss"]),
                churn=float(item["churn"]),
                reachability=float(item["reachability"]),
            )
        )
    edges = []
    for item in data["edges"]:
        _require_keys(item, _EDGE_KEYS, "edge entry")
        edges.append(Edge(src=int(item["src"]), dst=int(item["dst"]), psi=float(item["psi"])))
    graph = AttackGraph(vertices=tuple(vertices), edges=tuple(edges), classes=tuple(classes))
    problems = validate_graph(graph)
    if problems:
        raise FormatError("graph file failed validation: " + "; ".join(problems))
    return graph


def save_graph(g: AttackGraph, path: str) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(graph_to_dict(g), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_graph(path: str) -> AttackGraph:
    with open(path, encoding="utf8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"graph file is not valid JSON: {exc}") from None
    return graph_from_dict(data)
