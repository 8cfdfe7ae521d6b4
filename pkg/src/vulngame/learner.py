"""Online coverage selection with bandit feedback.

When game parameters are not trusted enough for a one-shot solve, the
defender can learn a good coverage mix across repeated rounds.  Arms are the
budget-feasible points of a delta-lattice over coverage vectors.  Arm
selection uses exponential weights with importance-weighted reward estimates
and a decaying uniform-exploration mix.  Reward feedback is the defender's
utility against a best-responding attacker whose type is redrawn each round;
an optional sampled-feedback mode scores the played arm against a drawn
vulnerability hypothesis instead of the expected one.

Regret is measured against the best fixed arm in hindsight on the realized
type sequence, which is the standard comparator for this family of learners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasibleError
from .game import GameInstance, TIE_TOL
from .graph import vertex_presence_prob
from .rng import stream
from .solver import _coef_tables, feasible_lattice

ARM_CAP = 1_000_000


@dataclass(frozen=True)
class LearnerConfig:
    delta: float = 0.25
    reward_mode: str = "exact"    # "exact" | "sampled"


@dataclass(frozen=True)
class ArmTable:
    points: np.ndarray        # (n_arms, n_payload) coverage vectors
    payload: tuple[int, ...]  # vertex id per column
    du: np.ndarray            # (n_arms, n_types) defender utility at attacker BR
    attacked: np.ndarray      # (n_arms, n_types) chosen path index
    du_detect: np.ndarray     # (n_arms, n_types) detection-dependent part of du
    du_rest: np.ndarray       # (n_arms, n_types) remainder, independent of the hypothesis
    bounds: tuple[float, float]


@dataclass(frozen=True)
class OnlineResult:
    regret: np.ndarray        # cumulative hindsight regret, length T
    chosen: np.ndarray        # arm index per round
    types: np.ndarray         # attacker type index per round
    rewards: np.ndarray       # normalized reward fed to the learner
    n_arms: int
    bounds: tuple[float, float]
    seed: int


def build_arm_table(game: GameInstance, delta: float, cap: int = ARM_CAP) -> ArmTable:
    """Precompute, per arm and attacker type, the defender utility against
    the attacker's best response, split into the detection-dependent part
    (scales with the latent hypothesis) and the rest."""
    payload = list(game.payload_vertices)
    if not payload:
        raise ConfigError("game has no coverable vertices")
    weights = [game.graph.vertex(v).cost_w for v in payload]
    points = feasible_lattice(weights, game.budget, delta, cap)
    if len(points) == 0:
        raise InfeasibleError("no budget-feasible lattice point")

    dcov, dunc, arew, ak = _coef_tables(game)
    col = {vid: j for j, vid in enumerate(payload)}
    n_arms = len(points)
    n_types = len(game.types)
    n_paths = len(game.paths)

    du_out = np.zeros((n_arms, n_types))
    det_out = np.zeros((n_arms, n_types))
    path_out = np.zeros((n_arms, n_types), dtype=int)
    for ti, t in enumerate(game.types):
        au = np.zeros((n_arms, n_paths))
        du = np.zeros((n_arms, n_paths))
        det = np.zeros((n_arms, n_paths))
        for i, path in enumerate(game.paths):
            a_slope = np.zeros(len(payload))
            d_slope = np.zeros(len(payload))
            det_slope = np.zeros(len(payload))
            a_const = 0.0
            d_const = 0.0
            for vid in game.path_nongoal(path):
                a_slope[col[vid]] -= ak[(vid, t.id)]
                d_slope[col[vid]] += dcov[(vid, t.id)] - dunc[(vid, t.id)]
                det_slope[col[vid]] += game.v_bug[vid] * game.rho_f[vid] * game.eta_ver
                a_const += arew[(vid, t.id)]
                d_const += dunc[(vid, t.id)]
            au[:, i] = points @ a_slope + a_const
            du[:, i] = points @ d_slope + d_const
            det[:, i] = points @ det_slope
        top = au.max(axis=1)
        tied = au >= top[:, None] - TIE_TOL
        du_masked = np.where(tied, du, -np.inf)
        best_path = du_masked.argmax(axis=1)
        rows = np.arange(n_arms)
        du_out[:, ti] = du[rows, best_path]
        det_out[:, ti] = det[rows, best_path]
        path_out[:, ti] = best_path

    rest = du_out - det_out
    return ArmTable(
        points=points,
        payload=tuple(payload),
        du=du_out,
        attacked=path_out,
        du_detect=det_out,
        du_rest=rest,
        bounds=(float(du_out.min()), float(du_out.max())),
    )


def exp3_gamma(t: int, n_arms: int) -> float:
    """Decaying exploration rate; starts at 1 and shrinks like 1/sqrt(t)."""
    if t < 1:
        raise ConfigError("round index must be >= 1")
    return min(1.0, math.sqrt(n_arms * math.log(n_arms) / ((math.e - 1.0) * t)))


def exp3_probabilities(weights: np.ndarray, gamma: float) -> np.ndarray:
    total = weights.sum()
    return (1.0 - gamma) * weights / total + gamma / len(weights)


def exp3_update(weights: np.ndarray, chosen: int, reward: float, prob: float,
                gamma: float) -> None:
    """Importance-weighted exponential update of the chosen arm, in place.

    Weights are renormalized by their maximum so long runs cannot overflow.
    """
    if not (0.0 <= reward <= 1.0 + 1e-12):
        raise ConfigError(f"reward {reward} is outside [0, 1]")
    estimate = reward / prob
    weights[chosen] *= math.exp(gamma * estimate / len(weights))
    weights /= weights.max()


def _normalize(du: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if hi <= lo:
        return 0.5
    return min(1.0, max(0.0, (du - lo) / (hi - lo)))


def run_online_experiment(game: GameInstance, horizon: int, seed: int,
                          cfg: LearnerConfig | None = None) -> OnlineResult:
    """Play `horizon` rounds of exponential-weights coverage selection."""
    cfg = cfg or LearnerConfig()
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    if cfg.reward_mode not in ("exact", "sampled"):
        raise ConfigError(f"unknown reward mode {cfg.reward_mode!r}")

    table = build_arm_table(game, cfg.delta)
    n_arms = len(table.points)
    n_types = len(game.types)
    bounds = table.bounds
    if cfg.reward_mode == "sampled":
        # A drawn hypothesis can zero out the detection payoff, so the reward
        # scale must reach down to the detection-free utilities.
        bounds = (min(bounds[0], float(table.du_rest.min())), bounds[1])

    priors = np.array([t.prior_p for t in game.types])
    priors = priors / priors.sum()
    type_rng = stream(seed, "online-type")
    arm_rng = stream(seed, "online-arm")
    hyp_rng = stream(seed, "online-hyp")
    types = type_rng.choice(n_types, size=horizon, p=priors)

    presence = None
    if cfg.reward_mode == "sampled":
        presence = np.array(
            [vertex_presence_prob(game.graph.vertex(v)) for v in table.payload]
        )

    weights = np.ones(n_arms)
    chosen = np.zeros(horizon, dtype=int)
    rewards = np.zeros(horizon)
    earned = np.zeros(horizon)

    for t in range(horizon):
        gamma = exp3_gamma(t + 1, n_arms)
        probs = exp3_probabilities(weights, gamma)
        arm = int(arm_rng.choice(n_arms, p=probs))
        ti = int(types[t])
        if cfg.reward_mode == "exact":
            du = float(table.du[arm, ti])
        else:
            # Score the played arm against a drawn hypothesis: the detection
            # payoff only materializes where a weakness is actually present.
            z = hyp_rng.random(len(table.payload)) < presence
            path_idx = int(table.attacked[arm, ti])
            det = 0.0
            for j, vid in enumerate(table.payload):
                if z[j] and vid in game.path_nongoal(game.paths[path_idx]):
                    det += (
                        table.points[arm, j]
                        * game.v_bug[vid] * game.rho_f[vid] * game.eta_ver
                    )
            du = float(table.du_rest[arm, ti]) + det
        reward = _normalize(du, bounds)
        chosen[t] = arm
        rewards[t] = reward
        earned[t] = float(table.du[arm, ti])
        exp3_update(weights, arm, reward, float(probs[arm]), gamma)

    # Hindsight comparator: each arm's cumulative utility on the realized type
    # sequence, maximized per prefix.
    per_round = table.du[:, types].T          # (T, n_arms)
    cum_by_arm = np.cumsum(per_round, axis=0)
    best_cum = cum_by_arm.max(axis=1)
    regret = best_cum - np.cumsum(earned)
    return OnlineResult(
        regret=regret,
        chosen=chosen,
        types=types.astype(int),
        rewards=rewards,
        n_arms=n_arms,
        bounds=bounds,
        seed=seed,
    )


def fit_regret_exponent(regret: np.ndarray, t_lo: int | None = None) -> float:
    """Least-squares slope of log regret vs log round over the trace tail.

    Uses rounds from t_lo (default: a tenth of the horizon) to the end,
    dropping non-positive regret values, and needs at least 10 usable points.
    """
    horizon = len(regret)
    if t_lo is None:
        t_lo = max(10, horizon // 10)
    if not (1 <= t_lo <= horizon):
        raise ConfigError("fit window start is out of range")
    ts = np.arange(t_lo, horizon + 1)
    values = regret[t_lo - 1:]
    keep = values > 0
    if keep.sum() < 10:
        raise ConfigError("need at least 10 positive regret points to fit a slope")
    x = np.log(ts[keep])
    y = np.log(values[keep])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def write_regret_csv(path: str, result: OnlineResult) -> None:
    """Trace file: round t (1-based) and cumulative regret at t."""
    lines = ["t,regret"]
    for t in range(len(result.regret)):
        lines.append(f"{t + 1},{float(result.regret[t])!r}")
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(lines) + "\n")
