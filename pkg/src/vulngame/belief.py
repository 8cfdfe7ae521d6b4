"""Per-cell Bayesian beliefs driven by simulated analysis-tool output.

Belief state is one probability per (vertex, class) cell that the cell hosts
a real vulnerability.  Each executed analysis task yields one categorical
observation per detectable class (alert, clean, crash, or timeout); the
likelihood model below turns observations into posterior odds updates.

Likelihood structure, for a fixed timeout rate q:
  timeout: probability q regardless of the hypothesis
  static tools: alert with rho (vulnerable) or alpha (not), scaled by 1 - q;
      the rest of the mass is clean; crashes never occur
  fuzzing: crash with 1 - (1 - rho_fuzz)^(tau / tau0) when vulnerable, with a
      small false-crash rate when not, scaled by 1 - q; rest clean; no alerts
The four kinds always sum to one under each hypothesis.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError, FormatError
from .graph import AttackGraph, VertexKind
from .game import MethodId

log = logging.getLogger(__name__)


class ObservationKind(Enum):
    ALERT = "alert"
    CLEAN = "clean"
    CRASH = "crash"
    TIMEOUT = "timeout"


KIND_ORDER = (ObservationKind.ALERT, ObservationKind.CLEAN,
              ObservationKind.CRASH, ObservationKind.TIMEOUT)


@dataclass(frozen=True)
class Observation:
    vertex: int
    class_id: int
    method: MethodId
    tau: float
    kind: ObservationKind


@dataclass(frozen=True)
class ObservationModel:
    rho_static: dict[tuple[str, int], float]    # (method value, class id) -> TPR
    alpha_static: dict[tuple[str, int], float]  # (method value, class id) -> FPR
    rho_fuzz: float
    tau0: float
    timeout_rate: float
    crash_fp_rate: float

    def classes_for(self, method: MethodId, n_classes: int) -> list[int]:
        """Class ids the method can produce evidence about."""
        if method is MethodId.FUZZ:
            return list(range(n_classes))
        return sorted(c for (m, c) in self.rho_static if m == method.value)


def validate_observation_model(model: ObservationModel) -> None:
    problems = []
    if set(model.rho_static) != set(model.alpha_static):
        problems.append("rho and alpha tables must cover the same (method, class) keys")
    for key, rho in model.rho_static.items():
        alpha = model.alpha_static.get(key, 0.0)
        if not (0.0 <= rho <= 1.0) or not (0.0 <= alpha <= 1.0):
            problems.append(f"rates for {key} outside [0, 1]")
        elif rho < alpha:
            problems.append(f"rho < alpha for {key}; detector would be worse than noise")
    if not (0.0 <= model.rho_fuzz <= 1.0):
        problems.append("rho_fuzz outside [0, 1]")
    if model.tau0 <= 0:
        problems.append("tau0 must be positive")
    if not (0.0 <= model.timeout_rate < 1.0):
        problems.append("timeout_rate must be in [0, 1)")
    if not (0.0 <= model.crash_fp_rate <= 1.0):
        problems.append("crash_fp_rate outside [0, 1]")
    if problems:
        raise ConfigError("; ".join(problems))


def fuzz_crash_prob(model: ObservationModel, tau: float) -> float:
    """Chance a fuzzing campaign of budget tau crashes a vulnerable cell."""
    if tau < 0:
        raise ConfigError(f"tau must be non-negative, got {tau}")
    return 1.0 - (1.0 - model.rho_fuzz) ** (tau / model.tau0)


def observation_likelihood(model: ObservationModel, kind: ObservationKind,
                           vulnerable: bool, method: MethodId, class_id: int,
                           tau: float) -> float:
    """P(observation kind | hypothesis) for one task on one cell."""
    if tau < 0:
        raise ConfigError(f"tau must be non-negative, got {tau}")
    if kind is ObservationKind.TIMEOUT:
        return model.timeout_rate
    scale = 1.0 - model.timeout_rate
    if method is MethodId.FUZZ:
        crash = fuzz_crash_prob(model, tau) if vulnerable else model.crash_fp_rate
        if kind is ObservationKind.CRASH:
            return scale * crash
        if kind is ObservationKind.CLEAN:
            return scale * (1.0 - crash)
        return 0.0  # fuzzers produce crashes, not alerts
    key = (method.value, class_id)
    if key not in model.rho_static:
        raise ConfigError(f"observation model has no rates for method {method.value!r} "
                          f"class {class_id}")
    alert = model.rho_static[key] if vulnerable else model.alpha_static[key]
    if kind is ObservationKind.ALERT:
        return scale * alert
    if kind is ObservationKind.CLEAN:
        return scale * (1.0 - alert)
    return 0.0  # static analyzers do not crash the target


def bayes_update(belief: float, obs: Observation, model: ObservationModel) -> float:
    """Posterior vulnerability probability for the observed cell."""
    if not (0.0 <= belief <= 1.0):
        raise ConfigError(f"belief outside [0, 1]: {belief}")
    like_v = observation_likelihood(model, obs.kind, True, obs.method, obs.class_id, obs.tau)
    like_n = observation_likelihood(model, obs.kind, False, obs.method, obs.class_id, obs.tau)
    denom = like_v * belief + like_n * (1.0 - belief)
    if denom == 0.0:
        log.debug("zero-probability observation on cell (%d, %d); belief unchanged",
                  obs.vertex, obs.class_id)
        return belief
    return like_v * belief / denom


@dataclass(frozen=True)
class BeliefState:
    b: dict[tuple[int, int], float]
    round: int = 0

    def get(self, vertex: int, class_id: int) -> float:
        return self.b[(vertex, class_id)]

    def vertex_max(self, vertex: int, n_classes: int) -> float:
        """Strongest single-class belief at the vertex."""
        return max(self.b.get((vertex, c), 0.0) for c in range(n_classes))

    def vertex_presence(self, vertex: int, n_classes: int) -> float:
        """Belief that the vertex hosts at least one vulnerability."""
        prob_none = 1.0
        for c in range(n_classes):
            prob_none *= 1.0 - self.b.get((vertex, c), 0.0)
        return 1.0 - prob_none


def beliefs_from_priors(graph: AttackGraph) -> BeliefState:
    b = {}
    for v in graph.vertices:
        for c in range(graph.n_classes):
            b[(v.id, c)] = v.phi[c] if v.kind is not VertexKind.GOAL else 0.0
    return BeliefState(b=b, round=0)


def update_all(state: BeliefState, observations: list[Observation],
               model: ObservationModel) -> BeliefState:
    """Apply a batch of observations in canonical order; returns a new state.

    Canonical order (vertex, class, method, kind, tau) makes the result
    independent of the order tasks happened to finish in.
    """
    ordered = sorted(
        observations,
        key=lambda o: (o.vertex, o.class_id, o.method.value, o.kind.value, o.tau),
    )
    b = dict(state.b)
    for obs in ordered:
        cell = (obs.vertex, obs.class_id)
        if cell not in b:
            raise ConfigError(f"observation on unknown cell {cell}")
        b[cell] = bayes_update(b[cell], obs, model)
    return BeliefState(b=b, round=state.round + 1)


def zero_cell(state: BeliefState, vertex: int, class_id: int) -> BeliefState:
    """Belief bookkeeping for a mitigated cell: probability drops to zero."""
    b = dict(state.b)
    b[(vertex, class_id)] = 0.0
    return BeliefState(b=b, round=state.round)


# --- observation model file --------------------------------------------------

_SCALAR_KEYS = {"rho_fuzz", "tau0", "timeout_rate", "crash_fp_rate"}


def model_from_dict(data: dict, graph: AttackGraph) -> ObservationModel:
    if not isinstance(data, dict):
        raise FormatError("observation model document must be an object")
    label_to_id = {c.label: c.id for c in graph.classes}
    known_methods = {m.value for m in MethodId if m is not MethodId.FUZZ}
    rho: dict[tuple[str, int], float] = {}
    alpha: dict[tuple[str, int], float] = {}
    scalars: dict[str, float] = {}
    for key, val in data.items():
        if key in _SCALAR_KEYS:
            scalars[key] = float(val)
        elif key in known_methods:
            if not isinstance(val, dict):
                raise FormatError(f"method block {key!r} must be an object")
            for label, rates in val.items():
                if label not in label_to_id:
                    raise FormatError(f"method {key!r} names unknown class {label!r}")
                if not isinstance(rates, dict) or set(rates) != {"rho", "alpha"}:
                    raise FormatError(f"rates for {key}/{label} must have exactly rho and alpha")
                cid = label_to_id[label]
                rho[(key, cid)] = float(rates["rho"])
                alpha[(key, cid)] = float(rates["alpha"])
        else:
            raise FormatError(f"observation model has unknown key {key!r}")
    missing = _SCALAR_KEYS - set(scalars)
    if missing:
        raise FormatError(f"observation model missing scalars: {sorted(missing)}")
    model = ObservationModel(
        rho_static=rho,
        alpha_static=alpha,
        rho_fuzz=scalars["rho_fuzz"],
        tau0=scalars["tau0"],
        timeout_rate=scalars["timeout_rate"],
        crash_fp_rate=scalars["crash_fp_rate"],
    )
    validate_observation_model(model)
    return model


def model_to_dict(model: ObservationModel, graph: AttackGraph) -> dict:
    id_to_label = {c.id: c.label for c in graph.classes}
    methods: dict[str, dict] = {}
    for (m, cid), rho in sorted(model.rho_static.items()):
        methods.setdefault(m, {})[id_to_label[cid]] = {
            "rho": rho,
            "alpha": model.alpha_static[(m, cid)],
        }
    doc: dict = dict(methods)
    doc["rho_fuzz"] = model.rho_fuzz
    doc["tau0"] = model.tau0
    doc["timeout_rate"] = model.timeout_rate
    doc["crash_fp_rate"] = model.crash_fp_rate
    return doc


def load_observation_model(path: str, graph: AttackGraph) -> ObservationModel:
    with open(path, encoding="utf8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"observation model file is not valid JSON: {exc}") from None
    return model_from_dict(data, graph)


def save_observation_model(model: ObservationModel, graph: AttackGraph, path: str) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(model_to_dict(model, graph), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_belief_csv(state: BeliefState, path: str) -> None:
    """Snapshot beliefs to CSV with stable row order."""
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex", "class", "belief"])
        for (vertex, cid) in sorted(state.b):
            writer.writerow([vertex, cid, repr(state.b[(vertex, cid)])])
