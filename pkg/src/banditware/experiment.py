"""Round-by-round replay simulations, learning curves and baselines.

Metric definitions used throughout:

RMSE
    pooled over every (instance, arm) pair of the environment, each arm
    predicted by its own model.
accuracy
    fraction of instances whose recommended arm (pure argmin of the
    predictions, cheapest arm on ties) has an actual runtime within
    ``(1 + t_r) * best_actual + t_s``. With both tolerances at zero this is
    strict best-arm matching.

Every round is scored against the whole environment, not a held-out split.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .bandit import BanditConfig, new_bandit, select_arm, update
from .core import FeatureVector, HardwareConfig, cost_order
from .dataset import Dataset, ReplayEnvironment, ReplayInstance, hardware_for, observe, sample_rounds, subsample
from .exceptions import EmptyEnvironment, SchemaError
from .regression import DEFAULT_RIDGE, LinearModel, r_squared, solve_least_squares

REPORT_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    n_rounds: int = 50
    n_sims: int = 100
    seed: int = 0
    bandit: BanditConfig = field(default_factory=BanditConfig)
    eval_tolerance_ratio: float = 0.0
    eval_tolerance_seconds: float = 0.0
    standardize: bool = False
    record_decisions: bool = False

    def __post_init__(self):
        if int(self.n_rounds) != self.n_rounds or self.n_rounds < 1:
            raise ValueError(f"n_rounds must be a positive integer, got {self.n_rounds!r}")
        if int(self.n_sims) != self.n_sims or self.n_sims < 1:
            raise ValueError(f"n_sims must be a positive integer, got {self.n_sims!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.eval_tolerance_ratio < 0 or self.eval_tolerance_seconds < 0:
            raise ValueError("evaluation tolerances must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "n_sims": self.n_sims,
            "seed": self.seed,
            "bandit": self.bandit.to_dict(),
            "eval_tolerance_ratio": self.eval_tolerance_ratio,
            "eval_tolerance_seconds": self.eval_tolerance_seconds,
            "standardize": self.standardize,
            "record_decisions": self.record_decisions,
        }

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        return cls(
            int(d["n_rounds"]), int(d["n_sims"]), int(d["seed"]), BanditConfig.from_dict(d["bandit"]),
            float(d["eval_tolerance_ratio"]), float(d["eval_tolerance_seconds"]),
            bool(d.get("standardize", False)), bool(d.get("record_decisions", False)),
        )


@dataclass(frozen=True)
class CurvePoint:
    round: int
    mean: float
    sd: float
    n: int


# vectorized scoring

def _default_hardware(env):
    return tuple(HardwareConfig(h, 1, 1.0) for h in env.hardware_ids)


def _model_arrays(arm_models: Mapping, env: ReplayEnvironment):
    missing = [h for h in env.hardware_ids if h not in arm_models]
    if missing:
        raise ValueError(f"no model for hardware {missing}")
    W = np.array([arm_models[h].weights for h in env.hardware_ids], dtype=float)
    b = np.array([arm_models[h].bias for h in env.hardware_ids], dtype=float)
    return W.reshape(len(env.hardware_ids), len(env.feature_names)), b


def _rmse(P, R):
    mask = ~np.isnan(R)
    return float(np.sqrt(np.mean((P[mask] - R[mask]) ** 2)))


def _cost_permutation(env, hardware):
    hw = hardware_for(env.hardware_ids, hardware)
    cheapest_first = cost_order(hw)
    return np.array([env.column(h.id) for h in cheapest_first])


def _accuracy(P, R, perm, t_r, t_s):
    # argmin over cost-ordered columns: first hit is the cheapest of any tied minimum
    rec = perm[np.argmin(P[:, perm], axis=1)]
    actual = R[np.arange(len(R)), rec]
    best = np.nanmin(R, axis=1)
    known = ~np.isnan(actual)
    if not known.any():
        return float("nan")
    ok = actual[known] <= (1.0 + t_r) * best[known] + t_s
    return float(np.mean(ok))


def evaluate_rmse(arm_models: Mapping, env: ReplayEnvironment) -> float:
    """Pooled RMSE of each arm's model against every stored runtime."""
    if len(env) == 0:
        raise EmptyEnvironment("replay environment has no instances")
    W, b = _model_arrays(arm_models, env)
    return _rmse(env.X @ W.T + b, env.R)


def evaluate_accuracy(arm_models: Mapping, env: ReplayEnvironment, t_r: float = 0.0, t_s: float = 0.0,
                      hardware: Optional[Sequence[HardwareConfig]] = None) -> float:
    """Share of instances where the predicted-fastest arm is good enough in reality.

    Instances whose recommended arm was never run (incomplete environments)
    are left out of the denominator.
    """
    if len(env) == 0:
        raise EmptyEnvironment("replay environment has no instances")
    W, b = _model_arrays(arm_models, env)
    perm = _cost_permutation(env, hardware or _default_hardware(env))
    return _accuracy(env.X @ W.T + b, env.R, perm, t_r, t_s)


@dataclass(frozen=True)
class FullFitResult:
    models: dict
    rmse: float
    accuracy: float


def full_fit_baseline(env: ReplayEnvironment, ridge_lambda: float = DEFAULT_RIDGE, t_r: float = 0.0,
                      t_s: float = 0.0, hardware=None) -> FullFitResult:
    """Fit every arm on all of its runs in ``env``: the best the bandit can converge to."""
    if len(env) == 0:
        raise EmptyEnvironment("replay environment has no instances")
    models = {}
    for j, h in enumerate(env.hardware_ids):
        have = ~np.isnan(env.R[:, j])
        if not have.any():
            models[h] = LinearModel.zero(env.feature_names)
            continue
        w, bias = solve_least_squares(env.X[have], env.R[have, j], ridge_lambda)
        models[h] = LinearModel(tuple(w), bias, int(have.sum()), env.feature_names)
    return FullFitResult(
        models,
        evaluate_rmse(models, env),
        evaluate_accuracy(models, env, t_r, t_s, hardware),
    )


def standardized(env: ReplayEnvironment) -> ReplayEnvironment:
    """Copy of ``env`` with each feature shifted/scaled to mean 0, sd 1."""
    mu = env.X.mean(axis=0)
    sd = env.X.std(axis=0)
    sd[sd == 0] = 1.0
    instances = [
        ReplayInstance(inst.instance_id,
                       FeatureVector((np.asarray(inst.features.values) - mu) / sd, env.feature_names),
                       inst.runtimes)
        for inst in env.instances
    ]
    return ReplayEnvironment(instances, env.hardware_ids, env.feature_names, env.complete_only, env.n_dropped)


# simulation

def sim_rng(seed: int, sim_index: int) -> np.random.Generator:
    """Independent generator for one simulation, derived from (seed, sim_index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(sim_index)]))


@dataclass
class SimulationTrace:
    sim_index: int
    rmse: np.ndarray
    accuracy: np.ndarray
    decisions: list
    final_state: object


def run_simulation(env: ReplayEnvironment, config: ExperimentConfig, sim_index: int = 0,
                   hardware: Optional[Sequence[HardwareConfig]] = None) -> SimulationTrace:
    """One bandit run of ``config.n_rounds`` rounds over the replay environment.

    After each round the current per-arm models are scored on the full
    environment. ``hardware`` supplies resource costs; arms default to equal
    cost (ties then resolve by id).
    """
    if len(env) == 0:
        raise EmptyEnvironment("replay environment has no instances")
    if config.standardize:
        env = standardized(env)
    hardware = hardware_for(env.hardware_ids, hardware or _default_hardware(env))
    rng = sim_rng(config.seed, sim_index)
    schedule_rng, policy_rng = rng.spawn(2)
    schedule = sample_rounds(env, config.n_rounds, schedule_rng)
    perm = _cost_permutation(env, hardware)
    t_r, t_s = config.eval_tolerance_ratio, config.eval_tolerance_seconds

    state = new_bandit(hardware, env.feature_names, config.bandit)
    W = np.zeros((len(hardware), len(env.feature_names)))
    b = np.zeros(len(hardware))
    rmse_curve = np.empty(config.n_rounds)
    acc_curve = np.empty(config.n_rounds)
    decisions = []
    for t, idx in enumerate(schedule):
        idx = int(idx)
        x = env.features(idx)
        decision = select_arm(state, x, policy_rng)
        runtime = observe(env, idx, decision.hardware_id)
        state = update(state, decision.hardware_id, x, runtime)
        k = state.arm_index(decision.hardware_id)
        W[k] = state.arms[k].model.weights
        b[k] = state.arms[k].model.bias
        P = env.X @ W.T + b
        rmse_curve[t] = _rmse(P, env.R)
        acc_curve[t] = _accuracy(P, env.R, perm, t_r, t_s)
        if config.record_decisions:
            decisions.append({
                "round": t + 1,
                "instance": env.instances[idx].instance_id,
                "hardware_id": decision.hardware_id,
                "kind": decision.kind,
                "runtime": runtime,
            })
    return SimulationTrace(sim_index, rmse_curve, acc_curve, decisions, state)


def _curve(rows: np.ndarray) -> list:
    n = rows.shape[0]
    mean = rows.mean(axis=0)
    sd = rows.std(axis=0, ddof=1) if n > 1 else np.zeros(rows.shape[1])
    return [CurvePoint(t + 1, float(m), float(s), n) for t, (m, s) in enumerate(zip(mean, sd))]


@dataclass
class ExperimentReport:
    config: dict
    rmse_curve: list
    accuracy_curve: list
    full_fit_rmse: float
    full_fit_accuracy: float
    decisions: Optional[list] = None

    def final(self, metric: str) -> CurvePoint:
        return self.curve(metric)[-1]

    def curve(self, metric: str) -> list:
        if metric == "rmse":
            return self.rmse_curve
        if metric == "accuracy":
            return self.accuracy_curve
        raise ValueError(f"unknown metric {metric!r}")

    def means(self, metric: str) -> np.ndarray:
        return np.array([p.mean for p in self.curve(metric)])

    def to_dict(self) -> dict:
        doc = {
            "version": REPORT_VERSION,
            "config": self.config,
            "full_fit": {"rmse": self.full_fit_rmse, "accuracy": self.full_fit_accuracy},
            "curves": {
                name: [{"round": p.round, "mean": p.mean, "sd": p.sd, "n": p.n} for p in self.curve(name)]
                for name in ("rmse", "accuracy")
            },
        }
        if self.decisions is not None:
            doc["decisions"] = self.decisions
        return doc

    @classmethod
    def from_dict(cls, doc) -> "ExperimentReport":
        try:
            curves = {
                name: [CurvePoint(int(p["round"]), float(p["mean"]), float(p["sd"]), int(p.get("n", 0)))
                       for p in doc["curves"][name]]
                for name in ("rmse", "accuracy")
            }
            full = doc["full_fit"]
            report = cls(doc["config"], curves["rmse"], curves["accuracy"],
                         float(full["rmse"]), float(full["accuracy"]), doc.get("decisions"))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed report: {exc}") from exc
        if not report.rmse_curve or not report.accuracy_curve:
            raise SchemaError("report has empty curves")
        return report

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def csv_rows(self, metric: Optional[str] = None) -> list:
        """Flat plot-ready rows: bandit mean/sd per round plus the full-fit reference line."""
        rows = []
        metrics = ("rmse", "accuracy") if metric is None else (metric,)
        for name in metrics:
            ref = self.full_fit_rmse if name == "rmse" else self.full_fit_accuracy
            for p in self.curve(name):
                rows.append((p.round, name, "bandit", p.mean, p.sd))
            for p in self.curve(name):
                rows.append((p.round, name, "full_fit", ref, 0.0))
        return rows

    def to_csv(self, metric: Optional[str] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "metric", "series", "mean", "sd"])
        for r, name, series, mean, sd in self.csv_rows(metric):
            w.writerow([r, name, series, repr(float(mean)), repr(float(sd))])
        return buf.getvalue()


def load_report(path) -> ExperimentReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: report must be a JSON object")
    return ExperimentReport.from_dict(doc)


def run_repeated(env: ReplayEnvironment, config: ExperimentConfig,
                 hardware: Optional[Sequence[HardwareConfig]] = None, threads: int = 1,
                 extra_config: Optional[dict] = None) -> ExperimentReport:
    """``config.n_sims`` independent simulations aggregated into mean/sd curves."""
    hardware = hardware_for(env.hardware_ids, hardware or _default_hardware(env))
    scored_env = standardized(env) if config.standardize else env

    def one(i):
        return run_simulation(env, config, i, hardware)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(one, range(config.n_sims)))
    else:
        traces = [one(i) for i in range(config.n_sims)]
    full = full_fit_baseline(scored_env, config.bandit.ridge_lambda, config.eval_tolerance_ratio,
                             config.eval_tolerance_seconds, hardware)
    echo = config.to_dict()
    echo["hardware"] = [h.to_dict() for h in hardware]
    echo["n_instances"] = len(env)
    if extra_config:
        echo.update(extra_config)
    return ExperimentReport(
        echo,
        _curve(np.vstack([t.rmse for t in traces])),
        _curve(np.vstack([t.accuracy for t in traces])),
        full.rmse,
        full.accuracy,
        [t.decisions for t in traces] if config.record_decisions else None,
    )


# pooled linear-regression baseline

def one_hot_design(dataset: Dataset, hardware_ids=None):
    """Features with one indicator column per hardware id appended."""
    X, y, hw = dataset.arrays()
    ids = sorted(dataset.hardware_ids) if hardware_ids is None else list(hardware_ids)
    onehot = (hw[:, None] == np.array(ids, dtype=object)[None, :]).astype(float)
    return np.hstack([X, onehot]), y


def _summary(values, with_range=True) -> dict:
    v = np.asarray(values, dtype=float)
    out = {"min": float(v.min()), "max": float(v.max()), "mean": float(v.mean())}
    if with_range:
        out["range"] = out["max"] - out["min"]
    return out


@dataclass
class BaselineStats:
    rmse: np.ndarray
    r2: np.ndarray
    fit_duration: np.ndarray
    samples_per_model: int
    n_models: int

    def summary(self) -> dict:
        return {
            "samples_per_model": self.samples_per_model,
            "n_models": self.n_models,
            "rmse": _summary(self.rmse),
            "r2": _summary(self.r2),
            "fit_duration": _summary(self.fit_duration, with_range=False),
        }

    def to_dict(self) -> dict:
        doc = self.summary()
        doc["models"] = [
            {"rmse": float(a), "r2": float(b), "fit_duration": float(c)}
            for a, b, c in zip(self.rmse, self.r2, self.fit_duration)
        ]
        return doc


def linear_regression_baseline(dataset: Dataset, samples_per_model: int, n_models: int,
                               rng: np.random.Generator, ridge_lambda: float = DEFAULT_RIDGE) -> BaselineStats:
    """Pooled regressions (hardware one-hot appended) each trained on a small row sample.

    Every model is scored by RMSE and R^2 against the whole dataset.
    """
    if n_models < 1:
        raise ValueError("n_models must be >= 1")
    ids = sorted(dataset.hardware_ids)
    X_all, y_all = one_hot_design(dataset, ids)
    rmses, r2s, durations = [], [], []
    for _ in range(n_models):
        sample = subsample(dataset, samples_per_model, rng)
        X, y = one_hot_design(sample, ids)
        t0 = time.perf_counter()
        w, b = solve_least_squares(X, y, ridge_lambda)
        durations.append(time.perf_counter() - t0)
        pred = X_all @ w + b
        rmses.append(float(np.sqrt(np.mean((pred - y_all) ** 2))))
        r2s.append(r_squared(zip(pred, y_all)))
    return BaselineStats(np.array(rmses), np.array(r2s), np.array(durations), samples_per_model, n_models)
