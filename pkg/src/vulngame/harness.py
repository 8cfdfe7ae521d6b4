"""Strategy comparison harness: paired campaigns, metrics, and reports.

Runs the campaign loop under several allocation strategies on identical
worlds (same graph, same planted truth, same seeds) and aggregates a small
set of outcome metrics.  Statistical claims stay deliberately simple: means
with standard deviations plus paired one-sided sign tests.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, replace
from enum import Enum

from .defaults import default_game_params, default_observation_model
from .errors import ConfigError
from .game import (
    Coverage,
    GameInstance,
    MethodId,
    attacker_utility,
    build_game_instance,
)
from .graph import (
    AttackGraph,
    GeneratorConfig,
    GroundTruth,
    entry_reachable_ids,
    generate_synthetic_graph,
    path_is_valid,
    plant_ground_truth,
    vertex_presence_prob,
)
from .orchestrator import (
    OrchestratorConfig,
    RoundContext,
    RunResult,
    run_orchestration,
)


class Strategy(Enum):
    UNIFORM = "uniform"
    CHURN = "churn"
    FUZZ_ONLY = "fuzz-only"
    STATIC_PRIOR = "static-prior"
    BELIEF_SCORE = "belief-score"
    NO_SIBLING = "no-sibling"
    FULL = "full"


STRATEGY_ORDER = (
    Strategy.UNIFORM,
    Strategy.CHURN,
    Strategy.FUZZ_ONLY,
    Strategy.STATIC_PRIOR,
    Strategy.BELIEF_SCORE,
    Strategy.NO_SIBLING,
    Strategy.FULL,
)

ABLATION_NAMES = (
    "no-bayes",
    "no-stackelberg",
    "no-attack-graph",
    "no-sibling",
    "no-kcsan",
    "no-verifier",
)


@dataclass(frozen=True)
class Metrics:
    time_to_first: int | None     # 1-based round of the first validated true finding
    svub: float                   # severity-weighted validated-true yield per budget unit
    false_positive_rate: float    # verifier escapes over validated findings
    sibling_yield: int            # validated findings from sibling follow-up tasks
    surface_reduction: float      # relative drop of the best open attack utility
    validated: int
    true_findings: int
    escapes: int


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...] = tuple(range(20))
    rounds: int = 10
    budget: float = 40.0
    generator: GeneratorConfig = GeneratorConfig()
    max_paths: int = 64
    orchestrator: OrchestratorConfig = OrchestratorConfig()
    strategies: tuple[Strategy, ...] = STRATEGY_ORDER
    game_params_path: str | None = None    # None = defaults derived per graph
    obs_model_path: str | None = None


@dataclass(frozen=True)
class ExperimentResult:
    metrics: dict[Strategy, tuple[Metrics, ...]]
    seeds: tuple[int, ...]
    rounds: int
    budget: float


# --- world construction -------------------------------------------------------


def build_world(gen_cfg: GeneratorConfig, seed: int, budget: float,
                max_paths: int = 64, game_params_path: str | None = None,
                obs_model_path: str | None = None):
    """One synthetic benchmark instance: graph, game, planted truth, obs model."""
    from .belief import load_observation_model
    from .game import load_game_params

    graph = generate_synthetic_graph(replace(gen_cfg, seed=seed))
    truth = plant_ground_truth(graph, seed)
    params = (load_game_params(game_params_path) if game_params_path
              else default_game_params(graph, budget=budget))
    game = build_game_instance(graph, params, max_paths=max_paths, budget=budget)
    model = (load_observation_model(obs_model_path, graph) if obs_model_path
             else default_observation_model(graph))
    return graph, game, truth, model


# --- baseline allocators ------------------------------------------------------


def waterfill(scores: dict[int, float], weights: dict[int, float],
              budget: float) -> Coverage:
    """Coverage proportional to score, capped at 1, spending the whole budget.

    Finds the multiplier m with c_v = min(1, m * score_v) and sum of
    w_v * c_v equal to the budget (or saturates every scored vertex).
    """
    coverage = {v: 0.0 for v in scores}
    active = {v: s for v, s in scores.items() if s > 0 and weights[v] > 0}
    left = budget
    while active and left > 1e-12:
        denom = sum(weights[v] * active[v] for v in active)
        m = left / denom
        capped = [v for v in active if m * active[v] >= 1.0]
        if not capped:
            for v, s in active.items():
                coverage[v] = m * s
            break
        for v in capped:
            coverage[v] = 1.0
            left -= weights[v]
            del active[v]
    return coverage


def _uniform_level(ids: list[int], graph: AttackGraph, budget: float) -> Coverage:
    total_w = sum(graph.vertex(v).cost_w for v in ids)
    if total_w <= 0:
        return {}
    level = min(1.0, budget / total_w)
    return {v: level for v in ids}


def allocate_uniform(ctx: RoundContext) -> Coverage:
    """Spread the round budget evenly over every coverable vertex."""
    return _uniform_level(ctx.graph.nongoal_ids(), ctx.graph, ctx.tranche)


def allocate_churn(ctx: RoundContext) -> Coverage:
    """Coverage proportional to recent code churn."""
    ids = ctx.graph.nongoal_ids()
    scores = {v: ctx.graph.vertex(v).churn for v in ids}
    weights = {v: ctx.graph.vertex(v).cost_w for v in ids}
    return waterfill(scores, weights, ctx.tranche)


def allocate_entry_reachable(ctx: RoundContext) -> Coverage:
    """Even coverage restricted to vertices an attacker can actually reach."""
    reach = entry_reachable_ids(ctx.graph)
    ids = [v for v in ctx.graph.nongoal_ids() if v in reach]
    return _uniform_level(ids, ctx.graph, ctx.tranche)


def allocate_presence_prior(ctx: RoundContext) -> Coverage:
    """Coverage proportional to the prior chance any weakness is present."""
    ids = ctx.graph.nongoal_ids()
    scores = {v: vertex_presence_prob(ctx.graph.vertex(v)) for v in ids}
    weights = {v: ctx.graph.vertex(v).cost_w for v in ids}
    return waterfill(scores, weights, ctx.tranche)


def allocate_belief_score(ctx: RoundContext) -> Coverage:
    """Coverage proportional to belief times severity times reachability."""
    ids = ctx.graph.nongoal_ids()
    scores = {
        v: ctx.beliefs.vertex_max(v, ctx.graph.n_classes)
        * ctx.graph.vertex(v).cvss_score
        * ctx.graph.vertex(v).reachability
        for v in ids
    }
    weights = {v: ctx.graph.vertex(v).cost_w for v in ids}
    return waterfill(scores, weights, ctx.tranche)


def _force_weights(cfg: OrchestratorConfig, weights: dict[MethodId, float]) -> OrchestratorConfig:
    return replace(cfg, executor=replace(cfg.executor, method_weights=weights))


def _set_switches(cfg: OrchestratorConfig, **flags: bool) -> OrchestratorConfig:
    return replace(cfg, switches=replace(cfg.switches, **flags))


def strategy_setup(strategy: Strategy, base: OrchestratorConfig):
    """Per-strategy orchestrator config and allocator (None = game solver)."""
    if strategy is Strategy.UNIFORM:
        return _set_switches(base, use_sibling=False), allocate_uniform
    if strategy is Strategy.CHURN:
        return _set_switches(base, use_sibling=False), allocate_churn
    if strategy is Strategy.FUZZ_ONLY:
        cfg = _force_weights(base, {MethodId.FUZZ: 1.0})
        return _set_switches(cfg, use_sibling=False), allocate_entry_reachable
    if strategy is Strategy.STATIC_PRIOR:
        cfg = _force_weights(base, {MethodId.CODEQL: 1.0})
        return _set_switches(cfg, use_sibling=False), allocate_presence_prior
    if strategy is Strategy.BELIEF_SCORE:
        return base, allocate_belief_score
    if strategy is Strategy.NO_SIBLING:
        return _set_switches(base, use_sibling=False), None
    if strategy is Strategy.FULL:
        return base, None
    raise ConfigError(f"unknown strategy {strategy!r}")


def ablation_setup(name: str, base: OrchestratorConfig) -> OrchestratorConfig:
    if name == "no-bayes":
        return _set_switches(base, use_bayes_update=False)
    if name == "no-stackelberg":
        return _set_switches(base, use_stackelberg=False)
    if name == "no-attack-graph":
        return _set_switches(base, use_attack_graph=False)
    if name == "no-sibling":
        return _set_switches(base, use_sibling=False)
    if name == "no-kcsan":
        return _set_switches(base, use_kcsan=False)
    if name == "no-verifier":
        return _set_switches(base, use_verifier=False)
    raise ConfigError(f"unknown ablation {name!r}")


# --- metrics ------------------------------------------------------------------


def open_attack_utility(graph: AttackGraph, game: GameInstance) -> float:
    """Best attacker utility over still-traversable paths with no coverage."""
    best = 0.0
    found = False
    for path in game.paths:
        if not path_is_valid(graph, path):
            continue
        for t in game.types:
            val = attacker_utility(game, {}, path, t)
            if not found or val > best:
                best, found = val, True
    return best if found else 0.0


def compute_metrics(result: RunResult, game: GameInstance, rounds: int,
                    truth: GroundTruth | None = None) -> Metrics:
    """Outcome metrics, recomputable from the audit trail alone.

    When the planted truth is passed in, true findings are rederived from it
    and cross-checked against the recorded verifier escapes.
    """
    escape_cells = {(v, c) for _, v, c in result.escapes}
    if truth is not None:
        true_found = [f for f in result.findings if (f.vertex, f.class_id) in truth]
        rederived = {(f.vertex, f.class_id) for f in result.findings} - {
            (f.vertex, f.class_id) for f in true_found
        }
        if rederived != escape_cells:
            raise ConfigError("recorded escapes disagree with the planted truth")
    else:
        true_found = [
            f for f in result.findings if (f.vertex, f.class_id) not in escape_cells
        ]
    first = min((f.round + 1 for f in true_found), default=None)
    # Severities are summed in cell order so that runs validating the same
    # cells report bit-identical totals regardless of discovery order.
    sev_total = sum(sorted(f.severity for f in true_found))
    svub = sev_total / result.budget if result.budget > 0 else 0.0
    validated = len(result.findings)
    fpr = len(result.escapes) / validated if validated else 0.0
    sibling_yield = sum(1 for f in result.findings if f.is_sibling_hit)

    a0 = open_attack_utility(game.graph, game)
    a1 = open_attack_utility(result.final_graph, game)
    reduction = 0.0 if a0 == 0.0 else (a0 - a1) / abs(a0)
    return Metrics(
        time_to_first=first,
        svub=svub,
        false_positive_rate=fpr,
        sibling_yield=sibling_yield,
        surface_reduction=reduction,
        validated=validated,
        true_findings=len(true_found),
        escapes=len(result.escapes),
    )


def sign_test_greater(xs: list[float], ys: list[float]) -> float:
    """One-sided paired sign test: p-value for the claim that x tends to
    exceed y.  Zero differences are discarded."""
    if len(xs) != len(ys):
        raise ConfigError("paired samples differ in length")
    diffs = [x - y for x, y in zip(xs, ys) if x != y]
    n = len(diffs)
    if n == 0:
        return 1.0
    k = sum(1 for d in diffs if d > 0)
    return sum(math.comb(n, i) for i in range(k, n + 1)) / 2.0 ** n


# --- experiment drivers -------------------------------------------------------


def run_strategy(strategy: Strategy, graph: AttackGraph, game: GameInstance,
                 truth: GroundTruth, model, rounds: int, seed: int,
                 base: OrchestratorConfig) -> RunResult:
    cfg, allocator = strategy_setup(strategy, base)
    return run_orchestration(graph, game, truth, rounds, seed, cfg=cfg,
                             model=model, allocator=allocator)


def _build_cfg_world(cfg: ExperimentConfig, seed: int):
    return build_world(cfg.generator, seed, cfg.budget, cfg.max_paths,
                       cfg.game_params_path, cfg.obs_model_path)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    per_strategy: dict[Strategy, list[Metrics]] = {s: [] for s in cfg.strategies}
    for seed in cfg.seeds:
        graph, game, truth, model = _build_cfg_world(cfg, seed)
        for strategy in cfg.strategies:
            result = run_strategy(strategy, graph, game, truth, model,
                                  cfg.rounds, seed, cfg.orchestrator)
            per_strategy[strategy].append(
                compute_metrics(result, game, cfg.rounds, truth)
            )
    return ExperimentResult(
        metrics={s: tuple(v) for s, v in per_strategy.items()},
        seeds=tuple(cfg.seeds),
        rounds=cfg.rounds,
        budget=cfg.budget,
    )


def run_ablations(cfg: ExperimentConfig,
                  names: tuple[str, ...] = ABLATION_NAMES) -> dict[str, tuple[Metrics, ...]]:
    """Full configuration and each named ablation on the same worlds."""
    out: dict[str, list[Metrics]] = {"full": []}
    for name in names:
        out[name] = []
    for seed in cfg.seeds:
        graph, game, truth, model = _build_cfg_world(cfg, seed)
        full = run_orchestration(graph, game, truth, cfg.rounds, seed,
                                 cfg=cfg.orchestrator, model=model)
        out["full"].append(compute_metrics(full, game, cfg.rounds, truth))
        for name in names:
            acfg = ablation_setup(name, cfg.orchestrator)
            result = run_orchestration(graph, game, truth, cfg.rounds, seed,
                                       cfg=acfg, model=model)
            out[name].append(compute_metrics(result, game, cfg.rounds, truth))
    return {k: tuple(v) for k, v in out.items()}


def budget_sweep(cfg: ExperimentConfig,
                 budgets: tuple[float, ...]) -> list[tuple[float, Strategy, float]]:
    """Mean count of validated true findings per strategy at each budget level."""
    rows = []
    for budget in budgets:
        sweep_cfg = replace(cfg, budget=budget)
        result = run_experiment(sweep_cfg)
        for strategy in cfg.strategies:
            mean_found = statistics.fmean(
                m.true_findings for m in result.metrics[strategy]
            )
            rows.append((budget, strategy, mean_found))
    return rows


# --- aggregation and report files ---------------------------------------------


_METRIC_FIELDS = (
    "time_to_first",
    "svub",
    "false_positive_rate",
    "sibling_yield",
    "surface_reduction",
    "validated",
    "true_findings",
    "escapes",
)


def _mean_std(values: list[float]) -> dict:
    """Mean and sample standard deviation; handles missing observations."""
    if not values:
        return {"mean": None, "std": None, "n": 0}
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"mean": mean, "std": std, "n": len(values)}


def summarize(result: ExperimentResult) -> dict:
    doc: dict = {
        "seeds": list(result.seeds),
        "rounds": result.rounds,
        "budget": result.budget,
        "strategies": {},
        "comparisons": {},
    }
    for strategy, metrics in result.metrics.items():
        entry = {}
        for fieldname in _METRIC_FIELDS:
            values = [
                float(v) for m in metrics
                if (v := getattr(m, fieldname)) is not None
            ]
            entry[fieldname] = _mean_std(values)
        doc["strategies"][strategy.value] = entry
    if Strategy.FULL in result.metrics:
        full_svub = [m.svub for m in result.metrics[Strategy.FULL]]
        for strategy, metrics in result.metrics.items():
            if strategy is Strategy.FULL:
                continue
            other = [m.svub for m in metrics]
            doc["comparisons"][f"full_vs_{strategy.value}"] = {
                "svub_diff_mean": statistics.fmean(
                    a - b for a, b in zip(full_svub, other)
                ),
                "p_value": sign_test_greater(full_svub, other),
            }
    return doc


def write_report_json(path: str, result: ExperimentResult) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(summarize(result), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table_csv(path: str, result: ExperimentResult) -> None:
    lines = ["seed,strategy," + ",".join(_METRIC_FIELDS)]
    order = [s for s in STRATEGY_ORDER if s in result.metrics]
    for i, seed in enumerate(result.seeds):
        for strategy in order:
            m = result.metrics[strategy][i]
            cells = [str(seed), strategy.value]
            for fieldname in _METRIC_FIELDS:
                value = getattr(m, fieldname)
                if value is None:
                    cells.append("")
                elif isinstance(value, float):
                    cells.append(repr(value))
                else:
                    cells.append(str(value))
            lines.append(",".join(cells))
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_curves_csv(path: str, rows: list[tuple[float, Strategy, float]]) -> None:
    lines = ["budget,method,findings"]
    for budget, strategy, mean_found in rows:
        lines.append(f"{budget!r},{strategy.value},{mean_found!r}")
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ablation_csv(path: str, ablations: dict[str, tuple[Metrics, ...]]) -> None:
    """One row per ablation: mean yield, relative change, sign-test p-value."""
    if "full" not in ablations:
        raise ConfigError("ablation table needs the full configuration as baseline")
    full = [m.svub for m in ablations["full"]]
    full_mean = statistics.fmean(full)
    lines = ["ablation,svub_mean,svub_delta_pct,p_value", f"full,{full_mean!r},0.0,"]
    for name in sorted(ablations):
        if name == "full":
            continue
        vals = [m.svub for m in ablations[name]]
        mean = statistics.fmean(vals)
        delta_pct = 0.0 if full_mean == 0 else 100.0 * (mean - full_mean) / full_mean
        p = sign_test_greater(full, vals)
        lines.append(f"{name},{mean!r},{delta_pct!r},{p!r}")
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(lines) + "\n")
