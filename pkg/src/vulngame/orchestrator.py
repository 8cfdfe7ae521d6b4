"""Round-based campaign loop tying planner, tools, verifier, and beliefs together.

Each round: score and prune candidate attack paths, pick a coverage vector
(game solve by default, or a pluggable allocator), split coverage into analysis
tasks, simulate tool output against the planted ground truth, update beliefs,
push alert/crash cells through a cascaded verifier, mitigate validated
findings, run similarity-driven sibling follow-ups from a reserved budget
slice, and update the posterior over attacker types from the observed path
choice.  All budget accounting is done in integer units so conservation is
exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import (
    BeliefState,
    KIND_ORDER,
    Observation,
    ObservationKind,
    ObservationModel,
    beliefs_from_priors,
    observation_likelihood,
    update_all,
    zero_cell,
)
from .defaults import default_method_weights, default_observation_model
from .errors import ConfigError, InvariantViolation
from .game import (
    Coverage,
    GameInstance,
    MethodId,
    METHOD_ORDER,
    best_response,
    expected_defender_utility,
)
from .graph import (
    AttackGraph,
    AttackPath,
    GroundTruth,
    VertexKind,
    mitigate_cell,
    path_is_valid,
)
from .rng import stream
from .solver import SolverConfig, solve_stackelberg

log = logging.getLogger(__name__)

_KIND_RANK = {VertexKind.ENTRY: 0, VertexKind.FUNC: 1, VertexKind.PRIV: 2, VertexKind.GOAL: 3}


@dataclass(frozen=True)
class PruneConfig:
    theta: float = 0.25
    top_k: int = 5


@dataclass(frozen=True)
class VerifierConfig:
    stage_tpr: tuple[float, float, float] = (0.95, 0.95, 0.98)
    stage_fpr: tuple[float, float, float] = (0.5, 0.4, 0.3)


@dataclass(frozen=True)
class SiblingConfig:
    sigma: float = 0.72          # similarity threshold, strict
    beta: float = 0.20          # budget fraction reserved for follow-ups
    task_budget: float = 1.0    # size of one follow-up task


@dataclass(frozen=True)
class ExecutorConfig:
    method_weights: dict[MethodId, float] = field(default_factory=default_method_weights)
    # Static analyses need a minimum slice of budget before they produce any
    # result; completion ramps linearly up to a full-strength pass.  The
    # thresholds are sized so that a concentrated allocation funds completing
    # passes while a thin spread starves them.
    static_tau_min: float = 0.065
    static_tau_full: float = 0.20


@dataclass(frozen=True)
class Switches:
    use_stackelberg: bool = True
    use_bayes_update: bool = True
    use_verifier: bool = True
    use_attack_graph: bool = True
    use_sibling: bool = True
    use_kcsan: bool = True


@dataclass(frozen=True)
class OrchestratorConfig:
    prune: PruneConfig = PruneConfig()
    verifier: VerifierConfig = VerifierConfig()
    sibling: SiblingConfig = SiblingConfig()
    executor: ExecutorConfig = ExecutorConfig()
    solver: SolverConfig = SolverConfig()
    switches: Switches = Switches()
    lam_match: float = 0.8
    budget_scale: int = 1000    # integer budget units per budget unit
    # Chance that coverage sitting on the attacker's chosen path turns the
    # observed exploit attempt into a pinpointed candidate, per live weakness,
    # scaled by coverage times the routed tool's detection rate.  Interception
    # is the yield side of placing coverage where the attacker goes; 0 turns
    # the channel off.
    intercept_scale: float = 1.0


@dataclass(frozen=True)
class Task:
    vertex: int
    method: MethodId
    tau: float


@dataclass(frozen=True)
class DispatchPlan:
    tasks: tuple[Task, ...]
    round_budget: float

    @property
    def total_tau(self) -> float:
        return sum(t.tau for t in self.tasks)


@dataclass(frozen=True)
class Finding:
    vertex: int
    class_id: int
    severity: float
    round: int
    validated: bool
    is_sibling_hit: bool


@dataclass(frozen=True)
class RoundRecord:
    round: int
    coverage: Coverage
    observations: tuple[Observation, ...]
    spent_units: int
    sibling_spent_units: int
    objective: float
    attacker_path: int | None
    posterior: tuple[float, ...]


@dataclass(frozen=True)
class RunResult:
    findings: tuple[Finding, ...]
    per_round: tuple[RoundRecord, ...]
    final_beliefs: BeliefState
    final_graph: AttackGraph
    escapes: tuple[tuple[int, int, int], ...]   # (round, vertex, class)
    seed: int
    config_fingerprint: str
    true_type: int
    budget: float
    budget_scale: int
    budget_units: int
    main_spent_units: int
    sibling_spent_units: int
    main_remaining_units: int
    reserve_remaining_units: int


# --- planner-side path handling ---------------------------------------------


def path_score(path: AttackPath, beliefs: BeliefState, graph: AttackGraph) -> float:
    """Sum over path vertices of (strongest class belief) * severity * reachability."""
    total = 0.0
    for vid in path.vertex_ids:
        v = graph.vertex(vid)
        total += beliefs.vertex_max(vid, graph.n_classes) * v.cvss_score * v.reachability
    return total


def prune_paths(paths: tuple[AttackPath, ...], beliefs: BeliefState,
                graph: AttackGraph, cfg: PruneConfig) -> list[int]:
    """Indices of the highest-scoring paths, best first.

    Paths under theta are dropped; at most top_k survive.  Ties prefer the
    lower index.
    """
    if cfg.top_k < 1:
        raise ConfigError("top_k must be >= 1")
    scored = []
    for idx, path in enumerate(paths):
        score = path_score(path, beliefs, graph)
        if score >= cfg.theta:
            scored.append((-score, idx))
    scored.sort()
    return [idx for _, idx in scored[: cfg.top_k]]


# --- dispatch and simulated execution ----------------------------------------


def dispatch(coverage: Coverage, graph: AttackGraph, round_budget: float,
             executor: ExecutorConfig) -> DispatchPlan:
    """Turn a coverage vector into per-method analysis tasks.

    Raw task sizes are coverage * method weight * round budget; if they add up
    to more than the round budget they are scaled back proportionally.
    Ordering is deterministic: vertex id, then method order.
    """
    if round_budget < 0:
        raise ConfigError("round budget must be non-negative")
    weights = {m: w for m, w in executor.method_weights.items() if w > 0}
    total_w = sum(weights.values())
    if not weights or total_w <= 0:
        raise ConfigError("dispatch needs at least one positive method weight")
    norm = {m: w / total_w for m, w in weights.items()}

    raw: list[Task] = []
    for vid in sorted(coverage):
        c = coverage[vid]
        if c <= 0:
            continue
        if not graph.has_vertex(vid):
            raise ConfigError(f"coverage references missing vertex {vid}")
        for m in METHOD_ORDER:
            if m in norm:
                raw.append(Task(vertex=vid, method=m, tau=c * norm[m] * round_budget))
    total = sum(t.tau for t in raw)
    scale = 1.0 if total <= round_budget else round_budget / total
    tasks = tuple(
        Task(vertex=t.vertex, method=t.method, tau=t.tau * scale) for t in raw if t.tau * scale > 0
    )
    return DispatchPlan(tasks=tasks, round_budget=round_budget)


def static_completion_prob(tau: float, executor: ExecutorConfig) -> float:
    """Chance a static pass actually finishes given its budget slice."""
    lo, hi = executor.static_tau_min, executor.static_tau_full
    if hi <= lo:
        return 1.0 if tau >= hi else 0.0
    return min(1.0, max(0.0, (tau - lo) / (hi - lo)))


def execute_simulated(task: Task, truth: frozenset[tuple[int, int]] | set[tuple[int, int]],
                      model: ObservationModel, rng: np.random.Generator,
                      n_classes: int, executor: ExecutorConfig,
                      detect_rng: np.random.Generator | None = None) -> list[Observation]:
    """Sample tool output for one task against the (current) latent truth.

    Fuzzing always produces output (its yield already scales with tau).  A
    static pass first has to complete; an underfunded pass yields nothing.

    When detect_rng is given, the completion gate and the per-class outcome
    draws come from it instead of rng.  Static analyses are deterministic
    programs: feeding a stream keyed by (vertex, method) but not by round
    makes a repeated pass reproduce its earlier verdicts instead of re-rolling
    them, and turns the completion ramp into a fixed per-target cost
    threshold: a slice too thin for the target fails no matter how often
    the same tool is re-run against it.
    """
    if detect_rng is None:
        detect_rng = rng
    if task.method is not MethodId.FUZZ:
        if detect_rng.random() >= static_completion_prob(task.tau, executor):
            return []
    observations = []
    for cid in model.classes_for(task.method, n_classes):
        vulnerable = (task.vertex, cid) in truth
        probs = [
            observation_likelihood(model, kind, vulnerable, task.method, cid, task.tau)
            for kind in KIND_ORDER
        ]
        draw = detect_rng.random()
        acc = 0.0
        kind = KIND_ORDER[-1]
        for k, p in zip(KIND_ORDER, probs):
            acc += p
            if draw < acc:
                kind = k
                break
        observations.append(
            Observation(vertex=task.vertex, class_id=cid, method=task.method,
                        tau=task.tau, kind=kind)
        )
    return observations


# --- verification, siblings, mitigation --------------------------------------


def cascaded_verify(is_true: bool, cfg: VerifierConfig, rng: np.random.Generator) -> bool:
    """Three filter stages in series; a candidate must pass all of them."""
    for tpr, fpr in zip(cfg.stage_tpr, cfg.stage_fpr):
        p = tpr if is_true else fpr
        if rng.random() >= p:
            return False
    return True


def verifier_escape_prob(cfg: VerifierConfig) -> float:
    return math.prod(cfg.stage_fpr)


def build_similarity_matrix(graph: AttackGraph) -> np.ndarray:
    """Pairwise vertex similarity from prior weakness profile, churn, and layer."""
    n = len(graph.vertices)
    feats = np.zeros((n, graph.n_classes + 2))
    for v in graph.vertices:
        feats[v.id, : graph.n_classes] = v.phi
        feats[v.id, graph.n_classes] = 0.5 * v.churn
        feats[v.id, graph.n_classes + 1] = _KIND_RANK[v.kind] / 3.0
    diff = feats[:, None, :] - feats[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    top = dist.max()
    if top <= 0:
        return np.ones((n, n))
    return 1.0 - dist / top


def sibling_search(found_vertex: int, sim: np.ndarray, sigma: float,
                   graph: AttackGraph) -> list[int]:
    """Non-goal vertices strictly more similar than sigma, best first."""
    out = []
    for v in graph.vertices:
        if v.id == found_vertex or v.kind is VertexKind.GOAL:
            continue
        s = float(sim[found_vertex, v.id])
        if s > sigma:
            out.append((-s, v.id))
    out.sort()
    return [vid for _, vid in out]


def apply_mitigation(graph: AttackGraph, beliefs: BeliefState,
                     vertex: int, class_id: int) -> tuple[AttackGraph, BeliefState]:
    """Fix one cell: zero its prior and belief; once nothing can be present at
    the vertex its outgoing edges disappear.  Idempotent."""
    new_graph = mitigate_cell(graph, vertex, class_id)
    new_beliefs = zero_cell(beliefs, vertex, class_id)
    return new_graph, new_beliefs


def update_type_posterior(posterior: list[float], observed: int,
                          predicted: list[int], n_paths: int,
                          lam_match: float = 0.8) -> list[float]:
    """Reweight attacker-type probabilities from one observed path choice.

    A type that would have picked the observed path has likelihood lam_match;
    any other choice spreads the remaining mass over the n_paths - 1 rivals.
    With a single path there is nothing to learn.
    """
    if len(posterior) != len(predicted):
        raise ConfigError("posterior and prediction lengths differ")
    if not (0.0 < lam_match < 1.0):
        raise ConfigError("lam_match must be in (0, 1)")
    if n_paths <= 1:
        return list(posterior)
    miss = (1.0 - lam_match) / (n_paths - 1)
    weights = [p * (lam_match if pred == observed else miss)
               for p, pred in zip(posterior, predicted)]
    total = sum(weights)
    if total <= 0:
        return list(posterior)
    return [w / total for w in weights]


# --- allocators ---------------------------------------------------------------


@dataclass
class RoundContext:
    round: int
    graph: AttackGraph
    beliefs: BeliefState
    tranche: float
    posterior: list[float]
    round_game: GameInstance | None


class UcbAllocator:
    """Bandit fallback used when game solving is switched off.

    Tracks per-vertex alert/crash rates and fills coverage greedily on the
    highest upper-confidence vertices.
    """

    def __init__(self, exploration: float = 2.0):
        self.exploration = exploration
        self.pulls: dict[int, int] = {}
        self.signal: dict[int, float] = {}
        self.total = 0

    def observe(self, observations: list[Observation]) -> None:
        touched: dict[int, bool] = {}
        for obs in observations:
            hit = obs.kind in (ObservationKind.ALERT, ObservationKind.CRASH)
            touched[obs.vertex] = touched.get(obs.vertex, False) or hit
        for vid, hit in touched.items():
            self.pulls[vid] = self.pulls.get(vid, 0) + 1
            self.signal[vid] = self.signal.get(vid, 0.0) + (1.0 if hit else 0.0)
            self.total += 1

    def __call__(self, ctx: RoundContext) -> Coverage:
        candidates = ctx.graph.nongoal_ids()
        scores = []
        for vid in candidates:
            n = self.pulls.get(vid, 0)
            if n == 0:
                score = float("inf")
            else:
                bonus = math.sqrt(2.0 * math.log(max(self.total, 2)) / n)
                score = self.signal.get(vid, 0.0) / n + self.exploration * bonus
            scores.append((-score, vid))
        scores.sort()
        return greedy_fill([vid for _, vid in scores], ctx.graph, ctx.tranche)


def greedy_fill(ordered_vertices: list[int], graph: AttackGraph, budget: float) -> Coverage:
    """Coverage 1.0 down the given order until the budget runs out."""
    coverage: Coverage = {}
    left = budget
    for vid in ordered_vertices:
        if left <= 0:
            break
        w = graph.vertex(vid).cost_w
        c = min(1.0, left / w)
        coverage[vid] = c
        left -= c * w
    return coverage


# --- the loop -----------------------------------------------------------------


def config_fingerprint(cfg: OrchestratorConfig, seed: int, budget: float, rounds: int) -> str:
    doc = {
        "seed": seed,
        "budget": budget,
        "rounds": rounds,
        "prune": [cfg.prune.theta, cfg.prune.top_k],
        "verifier": [list(cfg.verifier.stage_tpr), list(cfg.verifier.stage_fpr)],
        "sibling": [cfg.sibling.sigma, cfg.sibling.beta, cfg.sibling.task_budget],
        "weights": {m.value: w for m, w in sorted(cfg.executor.method_weights.items(),
                                                  key=lambda kv: kv[0].value)},
        "ramp": [cfg.executor.static_tau_min, cfg.executor.static_tau_full],
        "switches": [cfg.switches.use_stackelberg, cfg.switches.use_bayes_update,
                     cfg.switches.use_verifier, cfg.switches.use_attack_graph,
                     cfg.switches.use_sibling, cfg.switches.use_kcsan],
        "lam_match": cfg.lam_match,
        "scale": cfg.budget_scale,
        "solver": [cfg.solver.lp_tolerance, cfg.solver.grid_delta],
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf8")).hexdigest()[:16]


def effective_weights(cfg: OrchestratorConfig) -> dict[MethodId, float]:
    weights = dict(cfg.executor.method_weights)
    if not cfg.switches.use_kcsan:
        weights.pop(MethodId.KCSAN, None)
    weights = {m: w for m, w in weights.items() if w > 0}
    if not weights:
        raise ConfigError("no analysis method left enabled")
    total = sum(weights.values())
    return {m: w / total for m, w in weights.items()}


def _best_static_method(model, class_id: int, weights: dict[MethodId, float]) -> MethodId:
    """The enabled non-fuzz method with the best detection rate on the class."""
    best = None
    best_rho = -1.0
    for m in METHOD_ORDER:
        if m not in weights or m is MethodId.FUZZ:
            continue
        rho = model.rho_static.get((m.value, class_id), 0.0)
        if rho > best_rho + 1e-12:
            best, best_rho = m, rho
    if best is not None:
        return best
    return max(weights, key=lambda m: (weights[m], -METHOD_ORDER.index(m)))


def _belief_weighted_game(game: GameInstance, graph: AttackGraph, beliefs: BeliefState,
                          paths: tuple[AttackPath, ...], budget: float,
                          posterior: list[float]) -> GameInstance:
    """Planner view for one round: current beliefs scale both the
    validated-bug value and the expected breach impact (a vertex the planner
    believes is clean neither yields findings nor gets breached), the
    posterior replaces type priors, and the path set is the pruned (or
    flattened) one."""
    presence = {
        vid: beliefs.vertex_presence(vid, graph.n_classes) for vid in game.v_bug
    }
    v_bug = {vid: game.v_bug[vid] * presence[vid] for vid in game.v_bug}
    types = tuple(replace(t, prior_p=p) for t, p in zip(game.types, posterior))
    return replace(game, graph=graph, types=types, paths=paths, budget=budget,
                   v_bug=v_bug, impact_w=presence)


def _concentrate(coverage: Coverage, graph: AttackGraph) -> Coverage:
    """Realize a marginal coverage as full-depth analysis passes.

    The solve returns a marginal mixture over vertices; executing it
    literally splinters the round budget into slices too thin for any
    static pass to finish.  Funding vertices to full coverage in the
    mixture's own preference order spends the same coverage budget on the
    same targets, a few at full depth per round instead of all of them at
    token depth.  The last vertex funded may be fractional.
    """
    mass = sum(graph.vertex(v).cost_w * c for v, c in coverage.items())
    out: dict[int, float] = {}
    for v in sorted(coverage, key=lambda v: (-coverage[v], v)):
        if mass <= 1e-12:
            break
        w = graph.vertex(v).cost_w
        c = min(1.0, mass / w) if w > 0 else 1.0
        out[v] = c
        mass -= c * w
    return out


def _solver_allocator(cfg: OrchestratorConfig):
    def allocate(ctx: RoundContext) -> Coverage:
        if ctx.round_game is None:
            return {}
        solution = solve_stackelberg(ctx.round_game, cfg.solver)
        if solution.status != "optimal":
            log.warning("round %d solve was infeasible; skipping dispatch", ctx.round)
            return {}
        marginal = {v: c for v, c in solution.coverage.items() if c > 1e-12}
        return _concentrate(marginal, ctx.graph)

    return allocate


def _flat_paths(graph: AttackGraph) -> tuple[AttackPath, ...]:
    return tuple(AttackPath((vid,)) for vid in graph.nongoal_ids())


def run_orchestration(graph: AttackGraph, game: GameInstance, truth: GroundTruth,
                      rounds: int, seed: int, cfg: OrchestratorConfig | None = None,
                      model: ObservationModel | None = None,
                      allocator=None) -> RunResult:
    """Run the full campaign and return its audit trail."""
    cfg = cfg or OrchestratorConfig()
    model = model or default_observation_model(graph)
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    scale = cfg.budget_scale
    if scale < 1:
        raise ConfigError("budget_scale must be >= 1")

    weights = effective_weights(cfg)
    executor = replace(cfg.executor, method_weights=weights)

    budget_units = round(game.budget * scale)
    beta = cfg.sibling.beta if cfg.switches.use_sibling else 0.0
    if not (0.0 <= beta < 1.0):
        raise ConfigError("sibling beta must be in [0, 1)")
    reserve_units = math.floor(budget_units * beta)
    main_units = budget_units - reserve_units

    beliefs = beliefs_from_priors(graph)
    cur_graph = graph
    live_truth = set(truth.vuln)
    validated: set[tuple[int, int]] = set()
    shelved: set[tuple[int, int]] = set()
    findings: list[Finding] = []
    escapes: list[tuple[int, int, int]] = []
    records: list[RoundRecord] = []
    posterior = [t.prior_p for t in game.types]

    type_rng = stream(seed, "attacker-type")
    priors = np.array([t.prior_p for t in game.types])
    true_type = int(type_rng.choice(len(game.types), p=priors / priors.sum()))

    sim = build_similarity_matrix(graph)
    sib_task_units = max(1, round(cfg.sibling.task_budget * scale))

    if allocator is None:
        allocator = _solver_allocator(cfg) if cfg.switches.use_stackelberg else UcbAllocator()

    main_spent = 0
    sib_spent = 0

    def run_tasks(tasks, round_idx, budget_left_units, label):
        """Execute tasks in order; returns (observations, units spent)."""
        spent = 0
        observations: list[Observation] = []
        for task in tasks:
            units = math.floor(task.tau * scale + 1e-9)
            if units <= 0:
                continue
            if spent + units > budget_left_units:
                raise InvariantViolation("dispatch exceeded its budget tranche")
            spent += units
            tau_eff = units / scale
            rng = stream(seed, label, round_idx, task.vertex, task.method.value)
            detect_rng = None
            if task.method is not MethodId.FUZZ:
                detect_rng = stream(seed, "tool", task.vertex, task.method.value)
            observations.extend(
                execute_simulated(replace(task, tau=tau_eff), live_truth, model, rng,
                                  graph.n_classes, executor, detect_rng=detect_rng)
            )
        return observations, spent

    def verify_candidates(cells, round_idx, is_sibling):
        nonlocal cur_graph, beliefs
        new: list[Finding] = []
        for vertex, cid in cells:
            if (vertex, cid) in validated or (vertex, cid) in shelved:
                continue
            is_true = (vertex, cid) in live_truth
            if cfg.switches.use_verifier:
                # Re-verifying the same candidate is a reproducible procedure,
                # so the cascade draws are keyed by the cell alone: the verdict
                # does not depend on when or through which queue it arrives.
                rng = stream(seed, "verify", vertex, cid)
                passed = cascaded_verify(is_true, cfg.verifier, rng)
            else:
                passed = True
            if not passed:
                # Triage memory: a rejected candidate is written off, its
                # signal suppressed, and it is never queued again.
                shelved.add((vertex, cid))
                if cfg.switches.use_bayes_update:
                    beliefs = zero_cell(beliefs, vertex, cid)
                continue
            finding = Finding(
                vertex=vertex,
                class_id=cid,
                severity=graph.vertex(vertex).cvss_score,
                round=round_idx,
                validated=True,
                is_sibling_hit=is_sibling,
            )
            findings.append(finding)
            new.append(finding)
            validated.add((vertex, cid))
            if not is_true:
                escapes.append((round_idx, vertex, cid))
                log.info("verifier escape at vertex %d class %d (round %d)",
                         vertex, cid, round_idx)
            cur_graph, new_beliefs = apply_mitigation(cur_graph, beliefs, vertex, cid)
            if cfg.switches.use_bayes_update:
                beliefs = new_beliefs
            live_truth.discard((vertex, cid))
        return new

    for t in range(rounds):
        tranche_units = main_units * (t + 1) // rounds - main_units * t // rounds
        tranche = tranche_units / scale

        # Planner view of the world.
        if cfg.switches.use_attack_graph:
            candidate_paths = tuple(p for p in game.paths if path_is_valid(cur_graph, p))
        else:
            candidate_paths = _flat_paths(cur_graph)
        active_idx = prune_paths(candidate_paths, beliefs, cur_graph, cfg.prune)
        active_paths = tuple(candidate_paths[i] for i in active_idx)

        round_game = None
        if active_paths and tranche > 0:
            round_game = _belief_weighted_game(
                game, cur_graph, beliefs, active_paths, tranche, posterior,
            )

        ctx = RoundContext(round=t, graph=cur_graph, beliefs=beliefs,
                           tranche=tranche, posterior=list(posterior),
                           round_game=round_game)
        coverage = allocator(ctx) if (tranche_units > 0) else {}
        for vid, c in coverage.items():
            if c < -1e-9 or c > 1.0 + 1e-9:
                raise InvariantViolation(f"allocator produced coverage {c} at vertex {vid}")

        plan = dispatch(coverage, cur_graph, tranche, executor)
        if plan.total_tau > tranche + 1e-9:
            raise InvariantViolation("dispatch plan exceeds the round tranche")
        observations, spent = run_tasks(plan.tasks, t, tranche_units, "exec")
        main_spent += spent

        if cfg.switches.use_bayes_update and observations:
            beliefs = update_all(beliefs, observations, model)
        if isinstance(allocator, UcbAllocator):
            allocator.observe(observations)

        candidates = sorted(
            {
                (o.vertex, o.class_id)
                for o in observations
                if o.kind in (ObservationKind.ALERT, ObservationKind.CRASH)
            }
        )
        new_findings = verify_candidates(candidates, t, False)

        # Sibling follow-ups, funded from the reserve; no recursive triggers.
        sibling_obs: list[Observation] = []
        sib_round_spent = 0
        if cfg.switches.use_sibling and cfg.sibling.beta > 0:
            for finding in new_findings:
                for sib_vid in sibling_search(finding.vertex, sim, cfg.sibling.sigma, cur_graph):
                    if reserve_units - sib_spent - sib_round_spent < sib_task_units:
                        break
                    # A sibling follow-up hunts the same weakness pattern in
                    # similar code, so it runs the tool strongest on the
                    # class that was just validated.
                    method = _best_static_method(model, finding.class_id, weights)
                    task = Task(vertex=sib_vid, method=method, tau=sib_task_units / scale)
                    rng = stream(seed, "sib", t, sib_vid, method.value)
                    detect_rng = None
                    if method is not MethodId.FUZZ:
                        detect_rng = stream(seed, "tool", sib_vid, method.value)
                    sibling_obs.extend(
                        execute_simulated(task, live_truth, model, rng,
                                          graph.n_classes, executor,
                                          detect_rng=detect_rng)
                    )
                    sib_round_spent += sib_task_units
            sib_spent += sib_round_spent
            if cfg.switches.use_bayes_update and sibling_obs:
                beliefs = update_all(beliefs, sibling_obs, model)
            sib_candidates = sorted(
                {
                    (o.vertex, o.class_id)
                    for o in sibling_obs
                    if o.kind in (ObservationKind.ALERT, ObservationKind.CRASH)
                }
            )
            verify_candidates(sib_candidates, t, True)

        # Attacker's move against the realized coverage, on the paths that were
        # standing when the round began.
        valid_idx = [i for i, p in enumerate(game.paths) if path_is_valid(cur_graph, p)]
        attacker_path = None
        if valid_idx:
            attacker_path = best_response(game, coverage, game.types[true_type], valid_idx)
            if cfg.switches.use_attack_graph and len(valid_idx) > 1:
                predicted = [best_response(game, coverage, ty, valid_idx) for ty in game.types]
                posterior = update_type_posterior(posterior, attacker_path, predicted,
                                                  len(valid_idx), cfg.lam_match)

        # Coverage standing on the traversed path watches the exploit attempt
        # happen; each live weakness there can be pinpointed with probability
        # coverage times the routed tool's true rate.  This is how coverage
        # placed for interdiction, rather than for raw scanning yield, still
        # produces findings.
        if attacker_path is not None and cfg.intercept_scale > 0.0:
            intercepted: list[tuple[int, int]] = []
            for vid in game.paths[attacker_path].vertex_ids:
                c = coverage.get(vid, 0.0)
                if c <= 0.0:
                    continue
                method = game.method_for_vertex.get(vid)
                if method is None:
                    continue
                for cid in range(graph.n_classes):
                    cell = (vid, cid)
                    if cell not in live_truth or cell in validated or cell in shelved:
                        continue
                    if method is MethodId.FUZZ:
                        rate = model.rho_fuzz
                    else:
                        rate = model.rho_static.get((method.value, cid), 0.0)
                    p_hit = min(1.0, c * rate * cfg.intercept_scale)
                    if stream(seed, "icept", t, vid, cid).uniform() < p_hit:
                        intercepted.append(cell)
            if intercepted:
                verify_candidates(intercepted, t, False)

        if valid_idx:
            report_game = replace(
                game, types=tuple(replace(ty, prior_p=p) for ty, p in zip(game.types, posterior))
            )
            objective = expected_defender_utility(report_game, coverage, valid_idx)
        else:
            objective = 0.0

        records.append(
            RoundRecord(
                round=t,
                coverage=dict(sorted(coverage.items())),
                observations=tuple(observations) + tuple(sibling_obs),
                spent_units=spent,
                sibling_spent_units=sib_round_spent,
                objective=objective,
                attacker_path=attacker_path,
                posterior=tuple(posterior),
            )
        )

        if main_spent + sib_spent + (main_units - main_spent) + (reserve_units - sib_spent) \
                != budget_units:
            raise InvariantViolation("budget units do not balance")
        if main_spent > main_units or sib_spent > reserve_units:
            raise InvariantViolation("spent more than the allotted budget")

    return RunResult(
        findings=tuple(findings),
        per_round=tuple(records),
        final_beliefs=beliefs,
        final_graph=cur_graph,
        escapes=tuple(escapes),
        seed=seed,
        config_fingerprint=config_fingerprint(cfg, seed, game.budget, rounds),
        true_type=true_type,
        budget=game.budget,
        budget_scale=scale,
        budget_units=budget_units,
        main_spent_units=main_spent,
        sibling_spent_units=sib_spent,
        main_remaining_units=main_units - main_spent,
        reserve_remaining_units=reserve_units - sib_spent,
    )
