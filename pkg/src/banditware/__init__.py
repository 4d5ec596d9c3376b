"""Online hardware recommendation with a decaying contextual epsilon-greedy bandit."""

__version__ = "0.1.0"

from .bandit import (
    ArmState,
    BanditConfig,
    BanditState,
    Decision,
    estimate_all,
    load_state,
    new_bandit,
    recommend,
    save_state,
    select_arm,
    tolerant_select,
    update,
)
from .core import FeatureVector, HardwareConfig, Observation, RunRecord, resource_cost, validate_feature_vector
from .dataset import Dataset, ReplayEnvironment, build_replay, load_csv, load_hardware_csv, observe
from .estimator import BanditWareRecommender
from .experiment import ExperimentConfig, ExperimentReport, full_fit_baseline, run_repeated, run_simulation
from .regression import LinearModel, LinearRuntimeRegressor, fit_least_squares, predict, r_squared, rmse

__all__ = [
    "ArmState", "BanditConfig", "BanditState", "BanditWareRecommender", "Dataset", "Decision",
    "ExperimentConfig", "ExperimentReport", "FeatureVector", "HardwareConfig", "LinearModel",
    "LinearRuntimeRegressor", "Observation", "ReplayEnvironment", "RunRecord", "build_replay",
    "estimate_all", "fit_least_squares", "full_fit_baseline", "load_csv", "load_hardware_csv",
    "load_state", "new_bandit", "observe", "predict", "r_squared", "recommend", "resource_cost",
    "rmse", "run_repeated", "run_simulation", "save_state", "select_arm", "tolerant_select",
    "update", "validate_feature_vector",
]
