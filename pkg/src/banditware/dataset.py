"""Historical run traces and the replay environment built from them.

CSV layout: UTF-8, comma separated, header row first. The caller names the
feature columns, the hardware column and the runtime column; an instance
id column is optional. When it is missing, rows with the exact same
feature tuple are treated as one workflow instance.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import FeatureVector, HardwareConfig, Observation, RunRecord, check_hardware_set
from .exceptions import (
    EmptyDataset,
    EmptyEnvironment,
    InconsistentFeatures,
    MissingArm,
    MissingColumn,
    NoCompleteInstances,
    ParseError,
    SampleTooLarge,
    UnknownHardwareId,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    records: tuple
    feature_names: tuple
    hardware_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "hardware_ids", frozenset(self.hardware_ids))
        for rec in self.records:
            if rec.observation.features.feature_names != self.feature_names:
                raise InconsistentFeatures(
                    f"record {rec.instance_id!r} has features "
                    f"{rec.observation.features.feature_names}, expected {self.feature_names}"
                )
            if rec.observation.hardware_id not in self.hardware_ids:
                raise UnknownHardwareId(
                    f"record {rec.instance_id!r} uses unknown hardware "
                    f"{rec.observation.hardware_id!r}"
                )

    @classmethod
    def from_records(cls, records, feature_names=None) -> "Dataset":
        records = tuple(records)
        if not records:
            raise EmptyDataset("dataset has no records")
        if feature_names is None:
            feature_names = records[0].observation.features.feature_names
        return cls(records, feature_names, {r.observation.hardware_id for r in records})

    def __len__(self):
        return len(self.records)

    def arrays(self):
        """``(X, runtimes, hardware_ids)`` as numpy arrays in record order."""
        X = np.array([r.observation.features.values for r in self.records], dtype=float)
        X = X.reshape(len(self.records), len(self.feature_names))
        y = np.array([r.observation.runtime_seconds for r in self.records], dtype=float)
        hw = np.array([r.observation.hardware_id for r in self.records], dtype=object)
        return X, y, hw

    def filter(self, predicate) -> "Dataset":
        """Records for which ``predicate(record)`` holds; hardware ids are kept."""
        kept = tuple(r for r in self.records if predicate(r))
        if not kept:
            raise EmptyDataset("filter removed every record")
        return Dataset(kept, self.feature_names, self.hardware_ids)


def instance_key(values) -> str:
    """Canonical serialization of a feature tuple, used as implicit instance id."""
    return "|".join(repr(float(v)) for v in values)


def _parse_float(text, row, column, what):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(
            f"row {row}, column {column!r}: cannot parse {text!r} as {what}", row, column
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: {text!r} is not finite", row, column)
    return value


def load_csv(
    path,
    feature_columns: Sequence[str],
    hardware_column: str = "hardware",
    runtime_column: str = "runtime",
    instance_column: Optional[str] = None,
) -> Dataset:
    """Read run records from a CSV file. Row numbers in errors count the header as row 1."""
    feature_columns = tuple(feature_columns)
    if not feature_columns:
        raise MissingColumn("at least one feature column is required")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = list(feature_columns) + [hardware_column, runtime_column]
        if instance_column is not None:
            required.append(instance_column)
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        records = []
        for row_no, row in enumerate(reader, start=2):
            values = tuple(_parse_float(row[c], row_no, c, "a real number") for c in feature_columns)
            runtime = _parse_float(row[runtime_column], row_no, runtime_column, "a runtime")
            if runtime < 0:
                raise ParseError(
                    f"row {row_no}, column {runtime_column!r}: negative runtime {runtime!r}",
                    row_no, runtime_column,
                )
            hw = (row[hardware_column] or "").strip()
            if not hw:
                raise ParseError(f"row {row_no}, column {hardware_column!r}: empty hardware id",
                                 row_no, hardware_column)
            if instance_column is not None:
                inst = (row[instance_column] or "").strip()
                if not inst:
                    raise ParseError(f"row {row_no}, column {instance_column!r}: empty instance id",
                                     row_no, instance_column)
            else:
                inst = instance_key(values)
            fv = FeatureVector(values, feature_columns)
            records.append(RunRecord(inst, Observation(fv, hw, runtime)))
    if not records:
        raise EmptyDataset(f"{path}: no data rows")
    return Dataset.from_records(records, feature_columns)


def write_csv(
    dataset: Dataset,
    path,
    hardware_column: str = "hardware",
    runtime_column: str = "runtime",
    instance_column: Optional[str] = "instance_id",
) -> None:
    header = list(dataset.feature_names) + [hardware_column, runtime_column]
    if instance_column:
        header.append(instance_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in dataset.records:
            obs = rec.observation
            row = [repr(v) for v in obs.features.values]
            row += [obs.hardware_id, repr(obs.runtime_seconds)]
            if instance_column:
                row.append(rec.instance_id)
            w.writerow(row)


def load_hardware_csv(path) -> tuple:
    """Hardware sidecar: columns ``id, cpus, memory_gb`` and optional ``cost_weight``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in ("id", "cpus", "memory_gb") if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        for row_no, row in enumerate(reader, start=2):
            cpus = _parse_float(row["cpus"], row_no, "cpus", "a CPU count")
            mem = _parse_float(row["memory_gb"], row_no, "memory_gb", "memory in GiB")
            weight = row.get("cost_weight")
            weight = _parse_float(weight, row_no, "cost_weight", "a cost weight") if weight not in (None, "") else None
            try:
                out.append(HardwareConfig(row["id"].strip(), cpus, mem, weight))
            except ValueError as exc:
                raise ParseError(f"row {row_no}: {exc}", row_no) from None
    if not out:
        raise EmptyDataset(f"{path}: no hardware rows")
    return check_hardware_set(out)


def write_hardware_csv(hardware: Sequence[HardwareConfig], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cpus", "memory_gb", "cost_weight"])
        for h in hardware:
            w.writerow([h.id, h.cpus, repr(h.memory_gb), "" if h.cost_weight is None else repr(h.cost_weight)])


@dataclass(frozen=True)
class ReplayInstance:
    instance_id: str
    features: FeatureVector
    runtimes: dict


class ReplayEnvironment:
    """Logged runs grouped by workflow instance; the runtime oracle for simulation.

    ``X`` holds one feature row per instance and ``R`` one runtime column per
    hardware id (NaN where an instance lacks that arm). Both are read-only.
    """

    def __init__(self, instances, hardware_ids, feature_names, complete_only=True, n_dropped=0):
        self.instances = tuple(instances)
        self.hardware_ids = tuple(hardware_ids)
        self.feature_names = tuple(feature_names)
        self.complete_only = bool(complete_only)
        self.n_dropped = int(n_dropped)
        m = len(self.feature_names)
        self.X = np.array([inst.features.values for inst in self.instances], dtype=float).reshape(-1, m)
        self.R = np.array(
            [[inst.runtimes.get(h, np.nan) for h in self.hardware_ids] for inst in self.instances],
            dtype=float,
        ).reshape(-1, len(self.hardware_ids))
        self.X.setflags(write=False)
        self.R.setflags(write=False)
        self._column = {h: j for j, h in enumerate(self.hardware_ids)}
        if self.complete_only and np.isnan(self.R).any():
            raise ValueError("complete_only environment has missing runtimes")

    def __len__(self):
        return len(self.instances)

    def __repr__(self):
        return (f"ReplayEnvironment(n_instances={len(self)}, hardware_ids={self.hardware_ids}, "
                f"complete_only={self.complete_only}, n_dropped={self.n_dropped})")

    def column(self, hardware_id) -> int:
        try:
            return self._column[hardware_id]
        except KeyError:
            raise UnknownHardwareId(f"unknown hardware id {hardware_id!r}") from None

    def features(self, instance_index: int) -> FeatureVector:
        return self.instances[instance_index].features

    def observe(self, instance_index: int, hardware_id) -> float:
        return observe(self, instance_index, hardware_id)

    def to_dataset(self) -> Dataset:
        records = []
        for inst in self.instances:
            for h in self.hardware_ids:
                if h in inst.runtimes:
                    records.append(RunRecord(inst.instance_id, Observation(inst.features, h, inst.runtimes[h])))
        return Dataset(records, self.feature_names, self.hardware_ids)


def build_replay(dataset: Dataset, complete_only: bool = True, hardware_ids=None) -> ReplayEnvironment:
    """Group records by instance, averaging duplicate (instance, hardware) runtimes.

    With ``complete_only`` instances lacking any hardware id are dropped; the
    number dropped is logged and kept as ``env.n_dropped``.
    """
    if hardware_ids is None:
        hardware_ids = sorted(dataset.hardware_ids)
    hardware_ids = tuple(hardware_ids)
    unknown = dataset.hardware_ids - set(hardware_ids)
    if unknown:
        raise UnknownHardwareId(f"dataset uses hardware not in the hardware set: {sorted(unknown)}")
    sums = defaultdict(lambda: defaultdict(list))
    features = {}
    order = []
    for rec in dataset.records:
        inst = rec.instance_id
        fv = rec.observation.features
        if inst not in features:
            features[inst] = fv
            order.append(inst)
        elif features[inst] != fv:
            raise InconsistentFeatures(f"instance {inst!r} appears with different feature values")
        sums[inst][rec.observation.hardware_id].append(rec.observation.runtime_seconds)
    instances = []
    dropped = 0
    for inst in order:
        runtimes = {h: float(np.mean(v)) for h, v in sums[inst].items()}
        if complete_only and any(h not in runtimes for h in hardware_ids):
            dropped += 1
            continue
        instances.append(ReplayInstance(inst, features[inst], runtimes))
    if dropped:
        logger.warning("dropped %d incomplete instance(s) of %d", dropped, len(order))
    if complete_only and not instances:
        raise NoCompleteInstances(
            f"none of {len(order)} instances has a runtime for every hardware id"
        )
    return ReplayEnvironment(instances, hardware_ids, dataset.feature_names, complete_only, dropped)


def observe(env: ReplayEnvironment, instance_index: int, hardware_id) -> float:
    """Stored runtime of one instance on one arm."""
    inst = env.instances[instance_index]
    try:
        return inst.runtimes[hardware_id]
    except KeyError:
        env.column(hardware_id)
        raise MissingArm(f"instance {inst.instance_id!r} has no run on {hardware_id!r}") from None


def sample_rounds(env: ReplayEnvironment, n_rounds: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform with-replacement instance indices, one per round."""
    if len(env) == 0:
        raise EmptyEnvironment("replay environment has no instances")
    if n_rounds < 0:
        raise ValueError("n_rounds must be >= 0")
    return rng.integers(len(env), size=n_rounds)


def subsample(dataset: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Uniform without-replacement sample of ``n`` records."""
    if n > len(dataset.records):
        raise SampleTooLarge(f"cannot draw {n} rows from {len(dataset.records)}")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = rng.choice(len(dataset.records), size=n, replace=False)
    return Dataset(tuple(dataset.records[i] for i in idx), dataset.feature_names, dataset.hardware_ids)


def hardware_for(hardware_ids, hardware: Sequence[HardwareConfig]) -> tuple:
    """Hardware configs reordered to match ``hardware_ids``."""
    by_id = {h.id: h for h in hardware}
    missing = [h for h in hardware_ids if h not in by_id]
    if missing:
        raise UnknownHardwareId(f"no hardware description for {missing}")
    return tuple(by_id[h] for h in hardware_ids)
