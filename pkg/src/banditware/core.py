"""Shared value types: feature vectors, hardware descriptions, observations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import DimensionMismatch, DuplicateHardwareId, EmptyHardwareSet, NonFiniteValue, NegativeRuntime


@dataclass(frozen=True)
class FeatureVector:
    """An ordered, named context vector ``x`` describing one workflow run."""

    values: tuple
    feature_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "feature_names", tuple(str(n) for n in self.feature_names))
        validate_feature_vector(self)

    @classmethod
    def from_mapping(cls, mapping, feature_names: Sequence[str]) -> "FeatureVector":
        return cls(tuple(mapping[name] for name in feature_names), tuple(feature_names))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def as_dict(self) -> dict:
        return dict(zip(self.feature_names, self.values))

    def __len__(self):
        return len(self.values)


def validate_feature_vector(v) -> None:
    """Raise if ``v`` breaks the feature vector invariants; return None otherwise."""
    values = tuple(v.values)
    names = tuple(v.feature_names)
    if len(values) != len(names):
        raise DimensionMismatch(
            f"{len(names)} feature names but {len(values)} values"
        )
    if len(names) == 0:
        raise DimensionMismatch("feature vector must have at least one feature")
    for name, value in zip(names, values):
        if not math.isfinite(value):
            raise NonFiniteValue(f"feature {name!r} is not finite: {value!r}")


@dataclass(frozen=True)
class HardwareConfig:
    """One selectable hardware configuration (a bandit arm)."""

    id: str
    cpus: int
    memory_gb: float
    cost_weight: Optional[float] = None

    def __post_init__(self):
        if not str(self.id):
            raise ValueError("hardware id must be non-empty")
        object.__setattr__(self, "id", str(self.id))
        if int(self.cpus) != self.cpus or self.cpus < 1:
            raise ValueError(f"cpus must be a positive integer, got {self.cpus!r}")
        object.__setattr__(self, "cpus", int(self.cpus))
        if not (self.memory_gb > 0 and math.isfinite(self.memory_gb)):
            raise ValueError(f"memory_gb must be positive, got {self.memory_gb!r}")
        object.__setattr__(self, "memory_gb", float(self.memory_gb))
        if self.cost_weight is not None:
            if not (self.cost_weight >= 0 and math.isfinite(self.cost_weight)):
                raise ValueError(f"cost_weight must be non-negative, got {self.cost_weight!r}")
            object.__setattr__(self, "cost_weight", float(self.cost_weight))

    def to_dict(self) -> dict:
        d = {"id": self.id, "cpus": self.cpus, "memory_gb": self.memory_gb}
        if self.cost_weight is not None:
            d["cost_weight"] = self.cost_weight
        return d

    @classmethod
    def from_dict(cls, d) -> "HardwareConfig":
        return cls(d["id"], d["cpus"], d["memory_gb"], d.get("cost_weight"))


def resource_cost(h: HardwareConfig) -> tuple:
    """Comparison key for resource efficiency; smaller is cheaper.

    ``cost_weight`` wins when set. Otherwise CPUs are compared first, then
    memory. Ties are left to the caller (see :func:`cost_order`).
    """
    if h.cost_weight is not None:
        return (h.cost_weight, 0.0)
    return (float(h.cpus), h.memory_gb)


def cost_order(hardware: Iterable[HardwareConfig]) -> list:
    """Hardware sorted cheapest first, ties broken by id."""
    return sorted(hardware, key=lambda h: (resource_cost(h), h.id))


def check_hardware_set(hardware: Sequence[HardwareConfig]) -> tuple:
    hardware = tuple(hardware)
    if not hardware:
        raise EmptyHardwareSet("hardware set is empty")
    seen = set()
    for h in hardware:
        if h.id in seen:
            raise DuplicateHardwareId(f"duplicate hardware id {h.id!r}")
        seen.add(h.id)
    return hardware


@dataclass(frozen=True)
class Observation:
    features: FeatureVector
    hardware_id: str
    runtime_seconds: float

    def __post_init__(self):
        r = float(self.runtime_seconds)
        if not math.isfinite(r):
            raise NonFiniteValue(f"runtime is not finite: {self.runtime_seconds!r}")
        if r < 0:
            raise NegativeRuntime(f"runtime must be >= 0, got {r!r}")
        object.__setattr__(self, "runtime_seconds", r)
        object.__setattr__(self, "hardware_id", str(self.hardware_id))


@dataclass(frozen=True)
class RunRecord:
    instance_id: str
    observation: Observation

    def __post_init__(self):
        if not str(self.instance_id):
            raise ValueError("instance_id must be non-empty")
        object.__setattr__(self, "instance_id", str(self.instance_id))
