"""Game-theoretic planning simulator for kernel vulnerability discovery.

A defender allocates a limited analysis budget (static analyzers, fuzzers,
sanitizer campaigns) across the vertices of a synthetic intra-kernel attack
graph while a best-responding attacker of uncertain type picks exploitation
paths.  The package provides the graph model and generator, exact coverage
commitment solving, Bayesian belief tracking over latent weaknesses, the
round-based campaign loop with cascaded verification and sibling follow-ups,
an online bandit learner with regret traces, and a strategy comparison
harness, plus a CLI wrapping all of it.
"""

from .belief import (
    BeliefState,
    Observation,
    ObservationKind,
    ObservationModel,
    bayes_update,
    beliefs_from_priors,
    load_observation_model,
    observation_likelihood,
    save_observation_model,
    update_all,
    write_belief_csv,
)
from .errors import (
    BudgetError,
    ConfigError,
    FormatError,
    InfeasibleError,
    InvariantViolation,
    SimulatorError,
)
from .game import (
    AttackerType,
    GameInstance,
    GameParams,
    MethodId,
    attacker_utility,
    best_response,
    build_game_instance,
    defender_utility,
    expected_defender_utility,
    load_game_params,
    save_game_params,
)
from .graph import (
    AttackGraph,
    AttackPath,
    Edge,
    GeneratorConfig,
    GroundTruth,
    Vertex,
    VertexKind,
    VulnClass,
    enumerate_paths,
    generate_synthetic_graph,
    load_graph,
    plant_ground_truth,
    save_graph,
    validate_graph,
)
from .harness import (
    ExperimentConfig,
    Metrics,
    Strategy,
    compute_metrics,
    run_ablations,
    run_experiment,
    sign_test_greater,
)
from .learner import (
    LearnerConfig,
    OnlineResult,
    fit_regret_exponent,
    run_online_experiment,
)
from .orchestrator import (
    OrchestratorConfig,
    RunResult,
    run_orchestration,
)
from .solver import (
    Solution,
    SolverConfig,
    solve_grid_oracle,
    solve_stackelberg,
    uniform_coverage,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
