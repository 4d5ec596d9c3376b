import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from banditware.bandit import (
    EXPLOIT,
    EXPLORE,
    BanditConfig,
    estimate_all,
    explain,
    load_state,
    new_bandit,
    recommend,
    save_state,
    select_arm,
    state_from_dict,
    state_to_dict,
    tolerant_select,
    update,
)
from banditware.core import FeatureVector, HardwareConfig
from banditware.exceptions import (
    DuplicateHardwareId,
    EmptyHardwareSet,
    InconsistentFeatures,
    MissingHistory,
    NegativeRuntime,
    SchemaError,
    UnknownHardwareId,
)

from conftest import brute_force_select


def fv(*values, names=("x",)):
    return FeatureVector(values, names)


def test_new_bandit(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"], BanditConfig(alpha=0.99, epsilon0=1.0))
    assert estimate_all(s, fv(123.0)) == [0.0, 0.0, 0.0]
    assert s.epsilon == 1.0 and s.rounds_completed == 0
    assert all(arm.history == () for arm in s.arms)
    with pytest.raises(DuplicateHardwareId):
        new_bandit([ndp_hardware[0]] * 2, ["x"])
    with pytest.raises(EmptyHardwareSet):
        new_bandit([], ["x"])


@pytest.mark.parametrize("kwargs", [dict(alpha=0), dict(alpha=1.5), dict(epsilon0=-0.1),
                                    dict(epsilon0=2), dict(tolerance_ratio=-1), dict(tolerance_seconds=-1),
                                    dict(ridge_lambda=-1)])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        BanditConfig(**kwargs)


def test_estimate_all_after_fit(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"])
    for x, y in [(0, 1), (1, 3), (2, 5)]:
        s = update(s, "H1", fv(x), y)
    est = estimate_all(s, fv(3))
    assert est[0] == 0 and est[2] == 0
    assert est[1] == pytest.approx(7, abs=1e-6)
    with pytest.raises(InconsistentFeatures):
        estimate_all(s, FeatureVector([3], ["y"]))


def test_estimates_ignore_tolerances(ndp_hardware):
    a = new_bandit(ndp_hardware, ["x"], BanditConfig(tolerance_ratio=0.5, tolerance_seconds=100))
    b = new_bandit(ndp_hardware, ["x"], BanditConfig())
    a = update(update(a, "H2", fv(1), 10), "H2", fv(2), 30)
    b = update(update(b, "H2", fv(1), 10), "H2", fv(2), 30)
    assert estimate_all(a, fv(5)) == estimate_all(b, fv(5))


def test_tolerant_select_examples(ndp_hardware):
    est = [110, 100, 104]
    assert tolerant_select(est, ndp_hardware, 0.05, 0) == "H1"
    assert tolerant_select(est, ndp_hardware, 0, 20) == "H0"
    assert tolerant_select(est, ndp_hardware, 0, 0) == "H1"
    assert tolerant_select([5, 6, 4], ndp_hardware, 0, 0) == "H2"


def test_tolerant_select_negative_estimates_keep_fastest(ndp_hardware):
    # (1 + t_r) * min < min for negative min; the fastest arm still qualifies
    assert tolerant_select([-10, -5, 3], ndp_hardware, 0.5, 0) == "H0"
    assert tolerant_select([3, -10, -9], ndp_hardware, 0.0, 2.0) == "H1"


def _random_case(rng):
    k = int(rng.integers(1, 7))
    hardware = [HardwareConfig(f"h{i}", int(rng.integers(1, 5)), float(rng.choice([8, 16, 32])),
                               float(rng.integers(0, 4)) if rng.random() < 0.2 else None)
                for i in range(k)]
    if rng.random() < 0.3:
        est = rng.integers(0, 5, k).astype(float) * 10
    else:
        est = rng.uniform(1, 500, k)
    return list(est), hardware


def test_selection_matches_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(2000):
        est, hw = _random_case(rng)
        t_r, t_s = float(rng.choice([0, 0.05, 0.2, 1])), float(rng.choice([0, 1, 20, 100]))
        assert tolerant_select(est, hw, t_r, t_s) == brute_force_select(est, hw, t_r, t_s)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1, 1e4), min_size=1, max_size=6), st.floats(0, 2), st.floats(0, 2),
       st.floats(0, 100), st.floats(0, 100))
def test_tolerance_monotone(est, r1, r2, s1, s2):
    hw = [HardwareConfig(f"h{i}", 1 + (i * 7) % 5, 16) for i in range(len(est))]
    lo_r, hi_r = sorted((r1, r2))
    lo_s, hi_s = sorted((s1, s2))
    from banditware.core import resource_cost
    cost = {h.id: resource_cost(h) for h in hw}
    a = tolerant_select(est, hw, lo_r, lo_s)
    b = tolerant_select(est, hw, hi_r, hi_s)
    assert cost[b] <= cost[a]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=6), st.sampled_from([0.0, 0.05, 0.5]),
       st.sampled_from([0.5, 2.0, 3.0, 1000.0]))
def test_scale_invariance_without_seconds(est, t_r, c):
    hw = [HardwareConfig(f"h{i}", 1 + (i * 3) % 4, 8) for i in range(len(est))]
    est = [float(e) for e in est]
    assert tolerant_select(est, hw, t_r, 0) == tolerant_select([c * e for e in est], hw, t_r, 0)


def test_select_arm_explores_uniformly(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"], BanditConfig(epsilon0=1.0))
    rng = np.random.default_rng(0)
    n = 10_000
    counts = {h.id: 0 for h in ndp_hardware}
    for _ in range(n):
        d = select_arm(s, fv(1), rng)
        assert d.kind == EXPLORE and d.r_limit is None
        counts[d.hardware_id] += 1
    p = 1 / 3
    sigma = np.sqrt(n * p * (1 - p))
    for c in counts.values():
        assert abs(c - n * p) <= 3 * sigma


def test_select_arm_greedy_when_epsilon_zero(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"], BanditConfig(epsilon0=0.0))
    rng = np.random.default_rng(0)
    # cold start: every estimate is 0, the brute-force rule picks the cheapest arm
    d = select_arm(s, fv(5), rng)
    assert d.kind == EXPLOIT
    assert d.hardware_id == brute_force_select([0, 0, 0], ndp_hardware, 0, 0) == "H0"
    for x, y in [(1, 50), (2, 60)]:
        s = update(s, "H0", fv(x), y)
    for x, y in [(1, 10), (2, 20)]:
        s = update(s, "H2", fv(x), y)
    for x, y in [(1, 30), (2, 40)]:
        s = update(s, "H1", fv(x), y)
    d = select_arm(s, fv(3), rng)
    assert d.hardware_id == "H2"
    assert d.estimates["H2"] == pytest.approx(30, abs=1e-6)


def test_select_arm_does_not_mutate(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"])
    before = state_to_dict(s)
    select_arm(s, fv(1), np.random.default_rng(1))
    assert state_to_dict(s) == before


def test_update_examples(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"], BanditConfig(alpha=0.99, epsilon0=1.0))
    s1 = update(s, "H0", fv(1), 3)
    assert s1.epsilon == pytest.approx(0.99, rel=1e-15)
    assert s.epsilon == 1.0 and s.arms[0].history == ()
    s2 = update(s1, "H0", fv(2), 5)
    s3 = update(s2, "H0", fv(0), 1)
    m = s3.arms[0].model
    assert m.weights[0] == pytest.approx(2, abs=1e-6) and m.bias == pytest.approx(1, abs=1e-6)
    assert m.n_observations == len(s3.arms[0].history) == 3
    with pytest.raises(UnknownHardwareId):
        update(s3, "nope", fv(1), 1)
    with pytest.raises(NegativeRuntime):
        update(s3, "H0", fv(1), -1)
    assert s3.rounds_completed == 3


def test_update_touches_one_arm(ndp_hardware, rng):
    s = new_bandit(ndp_hardware, ["x"])
    for _ in range(20):
        hid = ndp_hardware[int(rng.integers(3))].id
        new = update(s, hid, fv(rng.uniform(0, 10)), rng.uniform(0, 100))
        for old_arm, new_arm in zip(s.arms, new.arms):
            if old_arm.hardware.id != hid:
                assert new_arm is old_arm
        s = new


def test_epsilon_schedule(ndp_hardware):
    cfg = BanditConfig(alpha=0.97, epsilon0=0.8)
    s = new_bandit(ndp_hardware, ["x"], cfg)
    for t in range(1, 301):
        s = update(s, "H0", fv(t % 5), 1.0)
        assert s.epsilon == pytest.approx(0.8 * 0.97 ** t, rel=1e-12)


def test_recommend_examples(ndp_hardware):
    s = new_bandit(ndp_hardware, ["x"], BanditConfig(epsilon0=0.0))
    assert recommend(s, fv(10)) == "H0"
    truth = {"H0": (3.0, 0.0), "H1": (1.0, 40.0), "H2": (0.5, 100.0)}
    for hid, (w, b) in truth.items():
        for x in (0, 50, 200):
            s = update(s, hid, fv(x), w * x + b)
    for x in np.linspace(0, 200, 41):
        runtimes = {h: w * x + b for h, (w, b) in truth.items()}
        first, second = sorted(runtimes.values())[:2]
        if second - first < 1e-6:
            continue  # crossing point, two arms tie
        brute = min(runtimes, key=runtimes.get)
        assert recommend(s, fv(x)) == brute
        assert recommend(s, fv(x)) == select_arm(s, fv(x), np.random.default_rng(0)).hardware_id


def test_determinism(ndp_hardware):
    def run(seed):
        s = new_bandit(ndp_hardware, ["x"])
        rng = np.random.default_rng(seed)
        out = []
        for t in range(60):
            x = fv(float(t % 7))
            d = select_arm(s, x, rng)
            out.append(d)
            s = update(s, d.hardware_id, x, 10.0 + t)
        return out
    assert run(5) == run(5)


def test_persistence_roundtrip(ndp_hardware, tmp_path, rng):
    s = new_bandit(ndp_hardware, ["a", "b"], BanditConfig(tolerance_ratio=0.1))
    for _ in range(30):
        hid = ndp_hardware[int(rng.integers(3))].id
        s = update(s, hid, FeatureVector(rng.uniform(0, 9, 2), ["a", "b"]), rng.uniform(1, 99))
    path = tmp_path / "m.json"
    save_state(s, path)
    loaded = load_state(path)
    assert loaded == s
    doc = json.loads(path.read_text())
    assert set(doc) == {"version", "feature_names", "config", "epsilon", "rounds_completed", "arms"}
    assert set(doc["config"]) == {"alpha", "epsilon0", "tolerance_ratio", "tolerance_seconds", "ridge_lambda"}

    save_state(s, path, include_history=False)
    bare = load_state(path)
    x = FeatureVector([1, 2], ["a", "b"])
    assert recommend(bare, x) == recommend(s, x)
    assert explain(bare, x) == explain(s, x)
    with pytest.raises(MissingHistory):
        update(bare, "H0", x, 1.0)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("arms"),
    lambda d: d.update(version=99),
    lambda d: d["arms"][0].update(weights=[1, 2, 3]),
    lambda d: d["arms"][0].update(n_observations=5),
])
def test_schema_errors(ndp_hardware, mutate):
    s = update(new_bandit(ndp_hardware, ["x"]), "H0", fv(1), 2)
    doc = state_to_dict(s)
    mutate(doc)
    with pytest.raises(SchemaError):
        state_from_dict(doc)
