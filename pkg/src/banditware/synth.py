"""Synthetic workloads and a tiled parallel matrix-squaring benchmark.

Two data sources for the experiment harness:

* linear synthetic hardware (:class:`SyntheticScenario`), where every arm's
  runtime is a known linear function of the features plus Gaussian noise;
* real measurements of squaring random integer matrices with worker pools
  of different sizes (:func:`bench_matmul`). Each worker count plays the
  role of one hardware configuration.
"""

from __future__ import annotations

import configparser
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .core import FeatureVector, HardwareConfig, Observation, RunRecord, check_hardware_set
from .dataset import Dataset, ReplayEnvironment, build_replay
from .exceptions import ChecksumMismatch, DataError, DimensionMismatch, NonSquareMatrix

logger = logging.getLogger(__name__)

MATMUL_FEATURES = ("size", "sparsity", "min_value", "max_value")
# worker pools share one host, so memory is not a differentiator
MATMUL_MEMORY_GB = 1.0
DEFAULT_TILE = 64


@dataclass(frozen=True)
class SyntheticArmSpec:
    hardware: HardwareConfig
    true_weights: tuple
    true_bias: float
    noise_sd: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "true_weights", tuple(float(w) for w in self.true_weights))
        if not self.noise_sd >= 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd!r}")

    def mean_runtime(self, x) -> float:
        return float(np.dot(self.true_weights, x) + self.true_bias)


def make_synthetic_env(
    specs: Sequence[SyntheticArmSpec],
    feature_sampler: Callable[[np.random.Generator], FeatureVector],
    rng: np.random.Generator,
) -> Iterator[tuple]:
    """Endless stream of ``(x, {hardware_id: runtime})`` draws.

    Runtimes are ``w . x + b + Normal(0, noise_sd)`` clamped at zero.
    """
    specs = tuple(specs)
    check_hardware_set([s.hardware for s in specs])
    dims = {len(s.true_weights) for s in specs}
    if len(dims) != 1:
        raise DimensionMismatch(f"arms disagree on feature dimensionality: {sorted(dims)}")
    (m,) = dims
    W = np.array([s.true_weights for s in specs], dtype=float).reshape(len(specs), m)
    b = np.array([s.true_bias for s in specs], dtype=float)
    sd = np.array([s.noise_sd for s in specs], dtype=float)
    ids = [s.hardware.id for s in specs]

    def draws():
        while True:
            x = feature_sampler(rng)
            if len(x) != m:
                raise DimensionMismatch(f"sampler produced {len(x)} features, arms expect {m}")
            runtimes = W @ x.as_array() + b + sd * rng.standard_normal(len(specs))
            yield x, dict(zip(ids, np.maximum(runtimes, 0.0).tolist()))

    return draws()


@dataclass(frozen=True)
class SyntheticScenario:
    """A named set of synthetic arms plus the feature distribution.

    ``feature_values`` maps each feature to either a tuple of discrete values
    (drawn uniformly) or a ``(low, high)`` pair under ``feature_ranges``.
    """

    feature_names: tuple
    arms: tuple
    feature_values: dict = field(default_factory=dict)
    feature_ranges: dict = field(default_factory=dict)
    n_instances: int = 80
    noise_fraction: float = 0.02

    @property
    def hardware(self) -> tuple:
        return tuple(a.hardware for a in self.arms)

    def sample_features(self, rng: np.random.Generator) -> FeatureVector:
        values = []
        for name in self.feature_names:
            if name in self.feature_values:
                choices = self.feature_values[name]
                values.append(choices[int(rng.integers(len(choices)))])
            else:
                low, high = self.feature_ranges[name]
                values.append(rng.uniform(low, high))
        return FeatureVector(values, self.feature_names)

    def mean_runtime(self) -> float:
        """Mean noiseless runtime over arms and the feature grid (range midpoints)."""
        grids = []
        for name in self.feature_names:
            if name in self.feature_values:
                grids.append(self.feature_values[name])
            else:
                grids.append((sum(self.feature_ranges[name]) / 2,))
        points = list(itertools.product(*grids))
        return float(np.mean([a.mean_runtime(p) for a in self.arms for p in points]))

    def with_noise(self, fraction: float) -> "SyntheticScenario":
        """Same scenario with every arm's noise set to ``fraction`` of the mean runtime."""
        sd = fraction * self.mean_runtime()
        return replace(self, noise_fraction=fraction, arms=tuple(replace(a, noise_sd=sd) for a in self.arms))

    def homogeneous(self, noise_sd: float) -> "SyntheticScenario":
        """Every arm shares the first arm's generating model; only noise differs."""
        first = self.arms[0]
        arms = tuple(replace(a, true_weights=first.true_weights, true_bias=first.true_bias, noise_sd=noise_sd)
                     for a in self.arms)
        return replace(self, arms=arms)

    def generator(self, rng: np.random.Generator):
        return make_synthetic_env(self.arms, self.sample_features, rng)

    def dataset(self, rng: np.random.Generator, n_instances: Optional[int] = None) -> Dataset:
        """Materialize ``n_instances`` draws; every instance has a run on every arm."""
        n = self.n_instances if n_instances is None else n_instances
        gen = self.generator(rng)
        records = []
        for i in range(n):
            x, runtimes = next(gen)
            for hw_id, r in runtimes.items():
                records.append(RunRecord(f"syn{i}", Observation(x, hw_id, r)))
        return Dataset(records, self.feature_names, {a.hardware.id for a in self.arms})

    def replay(self, rng: np.random.Generator, n_instances: Optional[int] = None) -> ReplayEnvironment:
        return build_replay(self.dataset(rng, n_instances), True, [a.hardware.id for a in self.arms])


def _floats(text) -> tuple:
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def parse_scenario(text: str, source: str = "<scenario>") -> SyntheticScenario:
    """Parse the INI-style scenario format (see ``data/default_scenario.ini``)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
        head = cp["scenario"]
        names = tuple(n.strip() for n in head["features"].replace(",", " ").split())
        noise_fraction = head.getfloat("noise_fraction", 0.0)
        n_instances = head.getint("n_instances", 80)
        values, ranges = {}, {}
        for name in names:
            sec = cp[f"feature {name}"]
            if "values" in sec:
                values[name] = _floats(sec["values"])
            else:
                ranges[name] = (sec.getfloat("low"), sec.getfloat("high"))
        arm_sections = [s for s in cp.sections() if s.startswith("arm ")]
        if not arm_sections:
            raise DataError(f"{source}: no [arm ...] sections")
        arms = []
        for s in arm_sections:
            sec = cp[s]
            hw = HardwareConfig(
                s[4:].strip(), sec.getint("cpus"), sec.getfloat("memory_gb"),
                sec.getfloat("cost_weight") if "cost_weight" in sec else None,
            )
            weights = _floats(sec["weights"])
            if len(weights) != len(names):
                raise DimensionMismatch(f"{source}: arm {hw.id!r} has {len(weights)} weights for {len(names)} features")
            sd = sec.getfloat("noise_sd") if "noise_sd" in sec else None
            arms.append((hw, weights, sec.getfloat("bias"), sd))
    except (configparser.Error, KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{source}: malformed scenario ({exc})") from exc
    scenario = SyntheticScenario(
        names,
        tuple(SyntheticArmSpec(hw, w, b, 0.0 if sd is None else sd) for hw, w, b, sd in arms),
        values, ranges, n_instances, noise_fraction,
    )
    default_sd = noise_fraction * scenario.mean_runtime()
    return replace(scenario, arms=tuple(
        replace(spec, noise_sd=default_sd if sd is None else sd)
        for spec, (_, _, _, sd) in zip(scenario.arms, arms)
    ))


def load_scenario(path=None) -> SyntheticScenario:
    """Load a scenario file, or the bundled default when ``path`` is None."""
    if path is None:
        text = resources.files("banditware").joinpath("data/default_scenario.ini").read_text(encoding="utf-8")
        return parse_scenario(text, "default_scenario.ini")
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), str(path))


# matrix squaring

@dataclass(frozen=True)
class MatrixSpec:
    size: int
    sparsity: float
    min_value: int = 0
    max_value: int = 100

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"size must be a positive integer, got {self.size!r}")
        if not 0 <= self.sparsity <= 1:
            raise ValueError(f"sparsity must be in [0, 1], got {self.sparsity!r}")
        if self.min_value > self.max_value:
            raise ValueError("min_value must be <= max_value")


def generate_matrix(spec: MatrixSpec, rng: np.random.Generator) -> np.ndarray:
    """Random integer matrix; each cell is zero with probability ``sparsity``."""
    n = int(spec.size)
    values = rng.integers(spec.min_value, spec.max_value, size=(n, n), endpoint=True, dtype=np.int64)
    zero = rng.random((n, n)) < spec.sparsity
    values[zero] = 0
    return values


def _exact_in_float(matrix) -> bool:
    # every partial sum of the product must stay an exactly representable integer
    peak = float(np.abs(matrix).max(initial=0))
    return peak * peak * matrix.shape[0] < 2.0 ** 53


def square_tiled(matrix, workers: int = 1, tile_size: int = DEFAULT_TILE) -> np.ndarray:
    """``matrix @ matrix`` computed tile by tile on a pool of ``workers`` threads."""
    M = np.asarray(matrix)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquareMatrix(f"expected a square matrix, got shape {M.shape}")
    if workers < 1 or tile_size < 1:
        raise ValueError("workers and tile_size must be >= 1")
    return _square(_operand(M), workers, tile_size).astype(M.dtype, copy=False)


def _operand(M):
    if np.issubdtype(M.dtype, np.integer) and _exact_in_float(M):
        return M.astype(np.float64)
    return M


def _square(A, workers, tile_size):
    n = A.shape[0]
    out = np.empty_like(A)
    tiles = [(i, j) for i in range(0, n, tile_size) for j in range(0, n, tile_size)]

    def work(tile):
        i, j = tile
        out[i:i + tile_size, j:j + tile_size] = A[i:i + tile_size, :] @ A[:, j:j + tile_size]

    # one BLAS thread per worker so the pool size is the only source of parallelism
    with threadpool_limits(limits=1):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(work, tiles):
                pass
    return out


def time_square(matrix, workers: int, tile_size: int = DEFAULT_TILE) -> tuple:
    """Wall-clock seconds to square ``matrix`` and the sum of the product's cells.

    Only the tiled multiplication is timed; operand conversion happens first.
    """
    M = np.asarray(matrix)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquareMatrix(f"expected a square matrix, got shape {M.shape}")
    if workers < 1 or tile_size < 1:
        raise ValueError("workers and tile_size must be >= 1")
    A = _operand(M)
    t0 = time.perf_counter()
    out = _square(A, workers, tile_size)
    elapsed = time.perf_counter() - t0
    if np.issubdtype(M.dtype, np.integer):
        checksum = int(out.astype(np.int64).sum())
    else:
        checksum = float(out.sum())
    return elapsed, checksum


def matmul_hardware(workers: Sequence[int]) -> tuple:
    return tuple(HardwareConfig(f"w{w}", int(w), MATMUL_MEMORY_GB) for w in workers)


def matmul_instance_id(spec: MatrixSpec, rep: int) -> str:
    return f"n{spec.size}-s{spec.sparsity:g}-v{spec.min_value}:{spec.max_value}-r{rep}"


def bench_matmul(
    sizes: Sequence[int],
    sparsities: Sequence[float],
    value_ranges: Sequence[tuple],
    workers_per_config: Sequence[int],
    repetitions: int,
    rng: np.random.Generator,
    tile_size: int = DEFAULT_TILE,
    progress: Optional[Callable[[str], None]] = None,
) -> Dataset:
    """Time matrix squaring over a parameter grid, one hardware id per worker count.

    Every (size, sparsity, range, repetition) cell generates one matrix that is
    squared once per worker count, in a seeded random order, so the runs on
    different "hardware" form one replay instance. Checksums must agree across
    worker counts; :class:`ChecksumMismatch` is raised otherwise.
    """
    if not sizes or not sparsities or not value_ranges or not workers_per_config:
        raise ValueError("every grid dimension needs at least one value")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    hardware = matmul_hardware(workers_per_config)
    records = []
    grid = list(itertools.product(sizes, sparsities, value_ranges, range(repetitions)))
    for k, (size, sparsity, (lo, hi), rep) in enumerate(grid):
        spec = MatrixSpec(int(size), float(sparsity), int(lo), int(hi))
        matrix = generate_matrix(spec, rng)
        inst = matmul_instance_id(spec, rep)
        fv = FeatureVector((spec.size, spec.sparsity, spec.min_value, spec.max_value), MATMUL_FEATURES)
        checksums = {}
        for j in rng.permutation(len(hardware)):
            hw = hardware[j]
            runtime, checksums[hw.id] = time_square(matrix, hw.cpus, tile_size)
            records.append(RunRecord(inst, Observation(fv, hw.id, runtime)))
        if len(set(checksums.values())) != 1:
            raise ChecksumMismatch(f"{inst}: checksums differ across worker counts: {checksums}")
        if progress is not None:
            progress(f"[{k + 1}/{len(grid)}] {inst} " + " ".join(
                f"{r.observation.hardware_id}={r.observation.runtime_seconds:.4f}s"
                for r in records[-len(hardware):]))
    return Dataset(records, MATMUL_FEATURES, {h.id for h in hardware})
