"""Command line front end.

Subcommands:
  generate   emit a synthetic attack graph plus matching default parameter files
  solve      compute the optimal coverage commitment for a graph + game file
  simulate   run the full campaign loop and write its audit trail
  regret     run the online learner and write regret traces
  compare    run the strategy comparison experiment (report, table, curves)
  ablate     run component ablations of the full method

Exit codes: 0 success, 1 usage error, 2 infeasible or bad configuration,
3 internal invariant violation.  Repeated invocations with identical flags
and seed write byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
import traceback
from dataclasses import replace

from .belief import load_observation_model, model_to_dict
from .defaults import default_game_params, default_observation_model
from .errors import InvariantViolation, SimulatorError
from .game import MethodId, build_game_instance, load_game_params, params_to_dict
from .graph import GeneratorConfig, generate_synthetic_graph, graph_to_dict, load_graph, plant_ground_truth
from .harness import (
    ExperimentConfig,
    Strategy,
    budget_sweep,
    run_ablations,
    run_experiment,
    write_ablation_csv,
    write_curves_csv,
    write_report_json,
    write_table_csv,
)
from .learner import LearnerConfig, fit_regret_exponent, run_online_experiment, write_regret_csv
from .orchestrator import (
    OrchestratorConfig,
    PruneConfig,
    SiblingConfig,
    Switches,
    VerifierConfig,
    run_orchestration,
)
from .solver import SolverConfig, solve_grid_oracle, solve_stackelberg


# --- config file --------------------------------------------------------------


_TOP_KEYS = {
    "seeds", "n_seeds", "rounds", "budget", "budgets", "max_paths",
    "strategies", "methods", "generator", "orchestrator",
    "game_params", "obs_model",
}
_GEN_KEYS = {
    "n_entry", "n_func", "n_priv", "n_goal", "edge_density", "phi_range",
    "psi_range", "n_classes", "cvss_range", "churn_range",
    "reachability_range", "cost_range",
}
_ORCH_KEYS = {
    "theta", "top_k", "sigma", "beta", "sibling_task_budget", "method_weights",
    "static_tau_min", "static_tau_full", "stage_tpr", "stage_fpr", "lam_match",
    "budget_scale", "grid_delta", "lp_tolerance", "switches",
}
_SWITCH_KEYS = {
    "use_stackelberg", "use_bayes_update", "use_verifier", "use_attack_graph",
    "use_sibling", "use_kcsan",
}


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SimulatorError(f"unknown {where} config keys: {', '.join(unknown)}")


def orchestrator_config_from_dict(doc: dict) -> OrchestratorConfig:
    _check_keys(doc, _ORCH_KEYS, "orchestrator")
    cfg = OrchestratorConfig()
    prune = replace(
        cfg.prune,
        theta=float(doc.get("theta", cfg.prune.theta)),
        top_k=int(doc.get("top_k", cfg.prune.top_k)),
    )
    sibling = replace(
        cfg.sibling,
        sigma=float(doc.get("sigma", cfg.sibling.sigma)),
        beta=float(doc.get("beta", cfg.sibling.beta)),
        task_budget=float(doc.get("sibling_task_budget", cfg.sibling.task_budget)),
    )
    verifier = cfg.verifier
    if "stage_tpr" in doc:
        verifier = replace(verifier, stage_tpr=tuple(float(x) for x in doc["stage_tpr"]))
    if "stage_fpr" in doc:
        verifier = replace(verifier, stage_fpr=tuple(float(x) for x in doc["stage_fpr"]))
    executor = cfg.executor
    if "method_weights" in doc:
        executor = replace(
            executor,
            method_weights={MethodId(k): float(v) for k, v in doc["method_weights"].items()},
        )
    executor = replace(
        executor,
        static_tau_min=float(doc.get("static_tau_min", executor.static_tau_min)),
        static_tau_full=float(doc.get("static_tau_full", executor.static_tau_full)),
    )
    solver = replace(
        cfg.solver,
        grid_delta=float(doc.get("grid_delta", cfg.solver.grid_delta)),
        lp_tolerance=float(doc.get("lp_tolerance", cfg.solver.lp_tolerance)),
    )
    switches = cfg.switches
    if "switches" in doc:
        _check_keys(doc["switches"], _SWITCH_KEYS, "switches")
        switches = replace(switches, **{k: bool(v) for k, v in doc["switches"].items()})
    return OrchestratorConfig(
        prune=prune,
        verifier=verifier,
        sibling=sibling,
        executor=executor,
        solver=solver,
        switches=switches,
        lam_match=float(doc.get("lam_match", cfg.lam_match)),
        budget_scale=int(doc.get("budget_scale", cfg.budget_scale)),
    )


def generator_config_from_dict(doc: dict, seed: int) -> GeneratorConfig:
    _check_keys(doc, _GEN_KEYS, "generator")
    base = GeneratorConfig(seed=seed)
    kwargs = {}
    for key, value in doc.items():
        if key.endswith("_range"):
            kwargs[key] = tuple(float(x) for x in value)
        elif key == "edge_density":
            kwargs[key] = float(value)
        else:
            kwargs[key] = int(value)
    return replace(base, **kwargs)


def experiment_config_from_dict(doc: dict, base_seed: int) -> tuple[ExperimentConfig, tuple[float, ...]]:
    _check_keys(doc, _TOP_KEYS, "top-level")
    if "seeds" in doc:
        seeds = tuple(int(s) for s in doc["seeds"])
    else:
        n = int(doc.get("n_seeds", 20))
        seeds = tuple(base_seed + i for i in range(n))
    names = doc.get("methods", doc.get("strategies"))
    cfg = ExperimentConfig(
        seeds=seeds,
        rounds=int(doc.get("rounds", 10)),
        budget=float(doc.get("budget", 40.0)),
        generator=generator_config_from_dict(doc.get("generator", {}), base_seed),
        max_paths=int(doc.get("max_paths", 64)),
        orchestrator=orchestrator_config_from_dict(doc.get("orchestrator", {})),
        strategies=tuple(Strategy(s) for s in names)
        if names is not None else ExperimentConfig.strategies,
        game_params_path=doc.get("game_params"),
        obs_model_path=doc.get("obs_model"),
    )
    budgets = tuple(float(b) for b in doc.get("budgets", (cfg.budget,)))
    return cfg, budgets


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SimulatorError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SimulatorError("config file must hold a JSON object")
    return doc


# --- serialization helpers ----------------------------------------------------


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def solution_to_dict(solution, graph) -> dict:
    coverage = [0.0] * len(graph.vertices)
    for vid, c in solution.coverage.items():
        coverage[vid] = c
    return {
        "coverage": coverage,
        "attacked_path": {str(t): p for t, p in sorted(solution.attacked_path.items())},
        "objective": solution.objective,
        "status": solution.status,
        "profiles_evaluated": solution.profiles_evaluated,
    }


def run_result_to_dict(result) -> dict:
    return {
        "seed": result.seed,
        "config_fingerprint": result.config_fingerprint,
        "true_type": result.true_type,
        "budget": result.budget,
        "budget_scale": result.budget_scale,
        "budget_units": result.budget_units,
        "main_spent_units": result.main_spent_units,
        "sibling_spent_units": result.sibling_spent_units,
        "main_remaining_units": result.main_remaining_units,
        "reserve_remaining_units": result.reserve_remaining_units,
        "findings": [
            {
                "vertex": f.vertex,
                "class": f.class_id,
                "severity": f.severity,
                "round": f.round,
                "validated": f.validated,
                "is_sibling_hit": f.is_sibling_hit,
            }
            for f in result.findings
        ],
        "escapes": [list(e) for e in result.escapes],
        "final_beliefs": [
            [v, c, b] for (v, c), b in sorted(result.final_beliefs.b.items())
        ],
        "rounds": [
            {
                "round": r.round,
                "objective": r.objective,
                "spent_units": r.spent_units,
                "sibling_spent_units": r.sibling_spent_units,
                "attacker_path": r.attacker_path,
                "posterior": list(r.posterior),
                "coverage": [[v, c] for v, c in sorted(r.coverage.items())],
                "observations": [
                    {
                        "vertex": o.vertex,
                        "class": o.class_id,
                        "method": o.method.value,
                        "tau": o.tau,
                        "kind": o.kind.value,
                    }
                    for o in r.observations
                ],
            }
            for r in result.per_round
        ],
    }


def write_rounds_csv(path: str, result) -> None:
    lines = ["round,objective,spent,findings_cum,fpr_cum"]
    found = 0
    escaped = 0
    escape_rounds = [e[0] for e in result.escapes]
    for r in result.per_round:
        found += sum(1 for f in result.findings if f.round == r.round)
        escaped += sum(1 for e in escape_rounds if e == r.round)
        fpr = escaped / found if found else 0.0
        spent = (r.spent_units + r.sibling_spent_units) / result.budget_scale
        lines.append(f"{r.round},{r.objective!r},{spent!r},{found},{fpr!r}")
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(lines) + "\n")


# --- subcommand implementations -----------------------------------------------


def _cmd_generate(args: argparse.Namespace) -> int:
    doc = _load_config(args.config)
    gen_doc = doc.get("generator", doc if doc and set(doc) <= _GEN_KEYS else {})
    gen = generator_config_from_dict(gen_doc, args.seed)
    graph = generate_synthetic_graph(gen)
    budget = float(doc.get("budget", 40.0))
    params = default_game_params(graph, budget=budget)
    model = default_observation_model(graph)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "graph.json"), graph_to_dict(graph))
    _write_json(os.path.join(args.out, "game.json"), params_to_dict(params))
    _write_json(os.path.join(args.out, "obs_model.json"), model_to_dict(model, graph))
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    params = load_game_params(args.game)
    game = build_game_instance(graph, params, budget=args.budget,
                               max_paths=args.max_paths)
    cfg = SolverConfig(grid_delta=args.grid_delta)
    if args.method == "grid":
        solution = solve_grid_oracle(game, cfg)
    else:
        solution = solve_stackelberg(game, cfg)
    doc = solution_to_dict(solution, graph)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        if args.format == "csv":
            lines = ["vertex,c"]
            for vid, c in enumerate(doc["coverage"]):
                lines.append(f"{vid},{c!r}")
            with open(os.path.join(args.out, "solution.csv"), "w", encoding="utf8") as fh:
                fh.write("\n".join(lines) + "\n")
        else:
            _write_json(os.path.join(args.out, "solution.json"), doc)
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def _orchestrator_config_from_args(args: argparse.Namespace,
                                   doc: dict) -> OrchestratorConfig:
    cfg = orchestrator_config_from_dict(doc.get("orchestrator", {}))
    prune = cfg.prune
    if args.theta is not None:
        prune = replace(prune, theta=args.theta)
    if args.top_k is not None:
        prune = replace(prune, top_k=args.top_k)
    sibling = cfg.sibling
    if args.beta is not None:
        sibling = replace(sibling, beta=args.beta)
    if args.sigma is not None:
        sibling = replace(sibling, sigma=args.sigma)
    return replace(cfg, prune=prune, sibling=sibling)


def _cmd_simulate(args: argparse.Namespace) -> int:
    doc = _load_config(args.config)
    graph = load_graph(args.graph)
    params = load_game_params(args.game)
    game = build_game_instance(graph, params, budget=args.budget,
                               max_paths=args.max_paths)
    model = (load_observation_model(args.obs_model, graph)
             if args.obs_model else default_observation_model(graph))
    cfg = _orchestrator_config_from_args(args, doc)
    truth = plant_ground_truth(graph, args.seed)
    result = run_orchestration(graph, game, truth, args.rounds, args.seed,
                               cfg=cfg, model=model)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "run.json"), run_result_to_dict(result))
    write_rounds_csv(os.path.join(args.out, "rounds.csv"), result)
    return 0


def _cmd_regret(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    params = load_game_params(args.game)
    game = build_game_instance(graph, params, budget=args.budget,
                               max_paths=args.max_paths)
    cfg = LearnerConfig(delta=args.delta)
    os.makedirs(args.out, exist_ok=True)
    slopes = []
    finals = []
    for i in range(args.seeds):
        seed = args.seed + i
        result = run_online_experiment(game, args.rounds, seed, cfg)
        write_regret_csv(os.path.join(args.out, f"regret_seed{seed}.csv"), result)
        slopes.append(fit_regret_exponent(result.regret))
        finals.append(float(result.regret[-1]))
    mean = statistics.fmean(slopes)
    std = statistics.stdev(slopes) if len(slopes) > 1 else 0.0
    half = 1.96 * std / math.sqrt(len(slopes)) if slopes else 0.0
    _write_json(
        os.path.join(args.out, "summary.json"),
        {
            "rounds": args.rounds,
            "delta": args.delta,
            "seeds": [args.seed + i for i in range(args.seeds)],
            "slope_per_seed": slopes,
            "slope_mean": mean,
            "slope_std": std,
            "slope_ci95": [mean - half, mean + half],
            "final_regret_per_seed": finals,
        },
    )
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    doc = _load_config(args.config)
    cfg, budgets = experiment_config_from_dict(doc, args.seed)
    result = run_experiment(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_report_json(os.path.join(args.out, "report.json"), result)
    write_table_csv(os.path.join(args.out, "table.csv"), result)
    rows = budget_sweep(cfg, budgets)
    write_curves_csv(os.path.join(args.out, "curves.csv"), rows)
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    doc = _load_config(args.config)
    cfg, _ = experiment_config_from_dict(doc, args.seed)
    ablations = run_ablations(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_ablation_csv(os.path.join(args.out, "ablation.csv"), ablations)
    return 0


# --- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vulngame", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=0, help="base random seed")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="output format where a choice applies")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", help="emit a synthetic attack graph and defaults")

    p_solve = sub.add_parser("solve", help="solve the coverage commitment game")
    p_solve.add_argument("--graph", required=True)
    p_solve.add_argument("--game", required=True)
    p_solve.add_argument("--budget", type=float, default=None)
    p_solve.add_argument("--method", choices=("exact", "grid"), default="exact")
    p_solve.add_argument("--grid-delta", type=float, default=0.05, dest="grid_delta")
    p_solve.add_argument("--max-paths", type=int, default=64, dest="max_paths")

    p_sim = sub.add_parser("simulate", help="run the campaign loop")
    p_sim.add_argument("--graph", required=True)
    p_sim.add_argument("--game", required=True)
    p_sim.add_argument("--obs-model", default=None, dest="obs_model")
    p_sim.add_argument("--budget", type=float, default=None)
    p_sim.add_argument("--rounds", type=int, default=10)
    p_sim.add_argument("--beta", type=float, default=None)
    p_sim.add_argument("--sigma", type=float, default=None)
    p_sim.add_argument("--theta", type=float, default=None)
    p_sim.add_argument("--top-k", type=int, default=None, dest="top_k")
    p_sim.add_argument("--max-paths", type=int, default=64, dest="max_paths")

    p_reg = sub.add_parser("regret", help="run the online learner")
    p_reg.add_argument("--graph", required=True)
    p_reg.add_argument("--game", required=True)
    p_reg.add_argument("--budget", type=float, default=None)
    p_reg.add_argument("--rounds", type=int, default=10000)
    p_reg.add_argument("--delta", type=float, default=0.25)
    p_reg.add_argument("--seeds", type=int, default=20)
    p_reg.add_argument("--max-paths", type=int, default=64, dest="max_paths")

    sub.add_parser("compare", help="strategy comparison experiment")
    sub.add_parser("ablate", help="component ablations")
    return parser


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "regret": _cmd_regret,
    "compare": _cmd_compare,
    "ablate": _cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"vulngame: invariant violation: {exc}", file=sys.stderr)
        return 3
    except SimulatorError as exc:
        print(f"vulngame: error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
