"""Default parameter tables for the synthetic experiment suite.

Detection rates are deliberately contrasted per weakness class: sanitizers
excel at memory corruption, the race detector is the only strong tool for
concurrency bugs, and static query packs sit in the middle.  The contrast is
what makes tool routing a real decision for the planner.
"""

from __future__ import annotations

from .belief import ObservationModel, validate_observation_model
from .game import AttackerType, GameParams, MethodId
from .graph import AttackGraph

# Per-method (rho, alpha) profiles keyed by broad weakness family.  Each
# method is strong on exactly one family; a single-tool campaign therefore
# caps out near a third of the planted weaknesses and routing across tools
# is what buys full coverage.
_MEMORY = {
    MethodId.CODEQL: (0.38, 0.05),
    MethodId.KASAN: (0.92, 0.06),
    MethodId.KCSAN: (0.05, 0.02),
    MethodId.PATCHMINE: (0.25, 0.08),
    MethodId.VERIFY: (0.90, 0.05),
}
_RACE = {
    MethodId.CODEQL: (0.18, 0.03),
    MethodId.KASAN: (0.10, 0.03),
    MethodId.KCSAN: (0.86, 0.07),
    MethodId.PATCHMINE: (0.18, 0.06),
    MethodId.VERIFY: (0.85, 0.05),
}
_LOGIC = {
    MethodId.CODEQL: (0.66, 0.15),
    MethodId.KASAN: (0.06, 0.02),
    MethodId.KCSAN: (0.04, 0.02),
    MethodId.PATCHMINE: (0.30, 0.10),
    MethodId.VERIFY: (0.88, 0.05),
}

_FAMILY_BY_LABEL = {
    "CWE-787": _MEMORY,
    "CWE-416": _MEMORY,
    "CWE-476": _MEMORY,
    "CWE-125": _MEMORY,
    "CWE-362": _RACE,
    "CWE-190": _LOGIC,
    "CWE-20": _LOGIC,
    "CWE-400": _LOGIC,
}
_FAMILY_CYCLE = (_MEMORY, _RACE, _LOGIC)


def _family_for(label: str, class_id: int) -> dict:
    return _FAMILY_BY_LABEL.get(label, _FAMILY_CYCLE[class_id % len(_FAMILY_CYCLE)])


def default_observation_model(graph: AttackGraph) -> ObservationModel:
    rho: dict[tuple[str, int], float] = {}
    alpha: dict[tuple[str, int], float] = {}
    for c in graph.classes:
        family = _family_for(c.label, c.id)
        for method, (r, a) in family.items():
            rho[(method.value, c.id)] = r
            alpha[(method.value, c.id)] = a
    model = ObservationModel(
        rho_static=rho,
        alpha_static=alpha,
        rho_fuzz=0.133,
        tau0=1.0,
        timeout_rate=0.03,
        crash_fp_rate=0.02,
    )
    validate_observation_model(model)
    return model


def default_game_params(graph: AttackGraph, budget: float = 40.0) -> GameParams:
    """Planning-model parameters matched to the default observation model."""
    rho_raw: dict[str, dict[str, float]] = {}
    for c in graph.classes:
        family = _family_for(c.label, c.id)
        for method, (r, _) in family.items():
            rho_raw.setdefault(method.value, {})[c.label] = r
    rho_raw[MethodId.FUZZ.value] = {c.label: 0.133 for c in graph.classes}
    types = (
        AttackerType(id=0, label="apt", prior_p=0.65,
                     reward_scale=1.0, deterrence_scale=3.0, impact_scale=1.4),
        AttackerType(id=1, label="opportunist", prior_p=0.35,
                     reward_scale=0.6, deterrence_scale=1.0, impact_scale=0.7),
    )
    return GameParams(
        types=types,
        lambda_fp=0.5,
        eta_ver=0.9,
        rho_raw=rho_raw,
        fp_cost={
            "codeql": 1.2,
            "fuzz": 0.4,
            "kasan": 0.6,
            "kcsan": 0.8,
            "patchmine": 0.9,
            "verify": 0.5,
        },
        budget=budget,
    )


def default_method_weights() -> dict[MethodId, float]:
    return {
        MethodId.CODEQL: 0.26,
        MethodId.FUZZ: 0.15,
        MethodId.KASAN: 0.28,
        MethodId.KCSAN: 0.24,
        MethodId.PATCHMINE: 0.07,
    }
