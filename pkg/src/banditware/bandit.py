"""Decaying contextual epsilon-greedy hardware selection with tolerant choice.

The state is an immutable value: :func:`update` returns a new
:class:`BanditState` and leaves its input untouched. One linear runtime
model is kept per hardware arm and refit on that arm's full history after
every observation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import FeatureVector, HardwareConfig, check_hardware_set, resource_cost
from .exceptions import (
    InconsistentFeatures,
    MissingHistory,
    NegativeRuntime,
    NonFiniteValue,
    SchemaError,
    UnknownHardwareId,
)
from .regression import DEFAULT_RIDGE, LinearModel, fit_least_squares, predict

STATE_VERSION = 1

EXPLORE = "explore"
EXPLOIT = "exploit"


@dataclass(frozen=True)
class BanditConfig:
    alpha: float = 0.99
    epsilon0: float = 1.0
    tolerance_ratio: float = 0.0
    tolerance_seconds: float = 0.0
    ridge_lambda: float = DEFAULT_RIDGE

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha!r}")
        if not 0 <= self.epsilon0 <= 1:
            raise ValueError(f"epsilon0 must be in [0, 1], got {self.epsilon0!r}")
        if not self.tolerance_ratio >= 0:
            raise ValueError("tolerance_ratio must be >= 0")
        if not self.tolerance_seconds >= 0:
            raise ValueError("tolerance_seconds must be >= 0")
        if not self.ridge_lambda >= 0:
            raise ValueError("ridge_lambda must be >= 0")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "epsilon0": self.epsilon0,
            "tolerance_ratio": self.tolerance_ratio,
            "tolerance_seconds": self.tolerance_seconds,
            "ridge_lambda": self.ridge_lambda,
        }

    @classmethod
    def from_dict(cls, d) -> "BanditConfig":
        return cls(**{k: float(d[k]) for k in cls().to_dict()})


@dataclass(frozen=True)
class ArmState:
    """One arm: its hardware, current model and the observations behind it.

    ``history`` is None for states loaded without histories; such arms can
    still be queried but not updated.
    """

    hardware: HardwareConfig
    model: LinearModel
    history: Optional[tuple] = ()


@dataclass(frozen=True)
class BanditState:
    arms: tuple
    epsilon: float
    rounds_completed: int
    config: BanditConfig
    feature_names: tuple

    @property
    def hardware(self) -> tuple:
        return tuple(arm.hardware for arm in self.arms)

    @property
    def hardware_ids(self) -> tuple:
        return tuple(arm.hardware.id for arm in self.arms)

    @property
    def models(self) -> dict:
        return {arm.hardware.id: arm.model for arm in self.arms}

    def arm_index(self, hardware_id) -> int:
        for i, arm in enumerate(self.arms):
            if arm.hardware.id == hardware_id:
                return i
        raise UnknownHardwareId(f"unknown hardware id {hardware_id!r}")


@dataclass(frozen=True)
class Decision:
    """Audit record of one selection."""

    hardware_id: str
    kind: str
    estimates: dict = field(default_factory=dict)
    r_limit: Optional[float] = None


def new_bandit(hardware_set: Sequence[HardwareConfig], feature_names, config: BanditConfig = None) -> BanditState:
    """Cold-start state: zero models, empty histories, ``epsilon = epsilon0``."""
    config = config or BanditConfig()
    hardware_set = check_hardware_set(hardware_set)
    feature_names = tuple(feature_names)
    if not feature_names:
        raise InconsistentFeatures("at least one feature name is required")
    arms = tuple(ArmState(h, LinearModel.zero(feature_names), ()) for h in hardware_set)
    return BanditState(arms, config.epsilon0, 0, config, feature_names)


def _check_features(state: BanditState, x: FeatureVector):
    if x.feature_names != state.feature_names:
        raise InconsistentFeatures(
            f"features {x.feature_names} do not match bandit features {state.feature_names}"
        )


def estimate_all(state: BanditState, x: FeatureVector) -> list:
    """Estimated runtime of ``x`` on every arm, in arm order."""
    _check_features(state, x)
    return [predict(arm.model, x) for arm in state.arms]


def _tolerant_choice(estimates, hardware_set, t_r, t_s):
    r_min = min(estimates)
    r_limit = (1.0 + t_r) * r_min + t_s
    # the fastest arm always qualifies, even when a negative minimum drags r_limit below it
    tolerated = [i for i, r in enumerate(estimates) if r <= r_limit or r == r_min]
    best = min(
        tolerated,
        key=lambda i: (resource_cost(hardware_set[i]), estimates[i], hardware_set[i].id),
    )
    return best, r_limit


def tolerant_select(estimates, hardware_set: Sequence[HardwareConfig], t_r: float = 0.0, t_s: float = 0.0) -> str:
    """Cheapest arm whose estimate is within ``(1 + t_r) * min + t_s``.

    ``estimates`` is aligned with ``hardware_set``. Among tolerated arms the
    lowest :func:`resource_cost` wins, then the lower estimate, then the id.
    """
    estimates = [float(e) for e in estimates]
    hardware_set = tuple(hardware_set)
    if not estimates:
        raise ValueError("estimates must be non-empty")
    if len(estimates) != len(hardware_set):
        raise ValueError("estimates and hardware_set differ in length")
    if t_r < 0 or t_s < 0:
        raise ValueError("tolerances must be non-negative")
    best, _ = _tolerant_choice(estimates, hardware_set, t_r, t_s)
    return hardware_set[best].id


def _exploit(state: BanditState, estimates) -> Decision:
    cfg = state.config
    hw = state.hardware
    best, r_limit = _tolerant_choice(estimates, hw, cfg.tolerance_ratio, cfg.tolerance_seconds)
    return Decision(hw[best].id, EXPLOIT, dict(zip(state.hardware_ids, estimates)), r_limit)


def select_arm(state: BanditState, x: FeatureVector, rng: np.random.Generator) -> Decision:
    """Explore uniformly with probability ``epsilon``; otherwise exploit."""
    estimates = estimate_all(state, x)
    if rng.random() < state.epsilon:
        k = int(rng.integers(len(state.arms)))
        return Decision(state.arms[k].hardware.id, EXPLORE, dict(zip(state.hardware_ids, estimates)))
    return _exploit(state, estimates)


def recommend(state: BanditState, x: FeatureVector) -> str:
    return _exploit(state, estimate_all(state, x)).hardware_id


def explain(state: BanditState, x: FeatureVector) -> Decision:
    """The exploit decision for ``x`` with per-arm estimates and ``r_limit``."""
    return _exploit(state, estimate_all(state, x))


def update(state: BanditState, hardware_id, x: FeatureVector, runtime_seconds: float) -> BanditState:
    """Record one observed runtime, refit that arm and decay epsilon."""
    k = state.arm_index(hardware_id)
    _check_features(state, x)
    runtime_seconds = float(runtime_seconds)
    if not math.isfinite(runtime_seconds):
        raise NonFiniteValue(f"runtime is not finite: {runtime_seconds!r}")
    if runtime_seconds < 0:
        raise NegativeRuntime(f"runtime must be >= 0, got {runtime_seconds!r}")
    arm = state.arms[k]
    if arm.history is None:
        raise MissingHistory(
            f"arm {hardware_id!r} was loaded without history; the state is recommend-only"
        )
    history = arm.history + ((x, runtime_seconds),)
    model = fit_least_squares(history, state.config.ridge_lambda)
    arms = state.arms[:k] + (replace(arm, model=model, history=history),) + state.arms[k + 1:]
    return replace(
        state,
        arms=arms,
        epsilon=state.epsilon * state.config.alpha,
        rounds_completed=state.rounds_completed + 1,
    )


# persistence

def state_to_dict(state: BanditState, include_history: bool = True) -> dict:
    arms = []
    for arm in state.arms:
        d = {
            "hardware": arm.hardware.to_dict(),
            "weights": list(arm.model.weights),
            "bias": arm.model.bias,
            "n_observations": arm.model.n_observations,
        }
        if include_history and arm.history is not None:
            d["history"] = [[list(x.values), r] for x, r in arm.history]
        arms.append(d)
    return {
        "version": STATE_VERSION,
        "feature_names": list(state.feature_names),
        "config": state.config.to_dict(),
        "epsilon": state.epsilon,
        "rounds_completed": state.rounds_completed,
        "arms": arms,
    }


def state_from_dict(doc) -> BanditState:
    try:
        if doc["version"] != STATE_VERSION:
            raise SchemaError(f"unsupported model version {doc['version']!r}")
        names = tuple(str(n) for n in doc["feature_names"])
        config = BanditConfig.from_dict(doc["config"])
        arms = []
        for a in doc["arms"]:
            hw = HardwareConfig.from_dict(a["hardware"])
            model = LinearModel(tuple(a["weights"]), a["bias"], int(a["n_observations"]), names)
            history = None
            if "history" in a:
                history = tuple(
                    (FeatureVector(tuple(values), names), float(r)) for values, r in a["history"]
                )
                if len(history) != model.n_observations:
                    raise SchemaError(
                        f"arm {hw.id!r}: n_observations={model.n_observations} "
                        f"but {len(history)} history rows"
                    )
            arms.append(ArmState(hw, model, history))
        check_hardware_set([a.hardware for a in arms])
        return BanditState(
            tuple(arms), float(doc["epsilon"]), int(doc["rounds_completed"]), config, names
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc


def save_state(state: BanditState, path, include_history: bool = True) -> None:
    doc = state_to_dict(state, include_history)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_state(path) -> BanditState:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return state_from_dict(doc)
