import numpy as np
import pytest

from banditware.core import FeatureVector, HardwareConfig, Observation, RunRecord
from banditware.dataset import (
    Dataset,
    build_replay,
    load_csv,
    load_hardware_csv,
    observe,
    sample_rounds,
    subsample,
    write_csv,
    write_hardware_csv,
)
from banditware.exceptions import (
    EmptyDataset,
    EmptyEnvironment,
    MissingArm,
    MissingColumn,
    NoCompleteInstances,
    ParseError,
    SampleTooLarge,
)

SIX_ROWS = """size,sparsity,hardware,runtime
100,0.5,H0,1.5
100,0.5,H1,1.25
100,0.5,H2,1.0
200,0.0,H0,9.0
200,0.0,H1,7.5
200,0.0,H2,6.0
"""


def _write(tmp_path, text, name="runs.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_six_rows(tmp_path):
    ds = load_csv(_write(tmp_path, SIX_ROWS), ["size", "sparsity"])
    assert len(ds) == 6
    assert ds.hardware_ids == {"H0", "H1", "H2"}
    assert len({r.instance_id for r in ds.records}) == 2
    env = build_replay(ds)
    assert len(env) == 2 and env.n_dropped == 0
    assert env.hardware_ids == ("H0", "H1", "H2")
    assert env.R.shape == (2, 3)


def test_parse_error_names_cell(tmp_path):
    bad = SIX_ROWS.replace("7.5", "abc")
    with pytest.raises(ParseError) as exc:
        load_csv(_write(tmp_path, bad), ["size", "sparsity"])
    assert exc.value.row == 6 and exc.value.column == "runtime"
    assert "abc" in str(exc.value)


def test_negative_runtime_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, SIX_ROWS.replace("9.0", "-9.0")), ["size"])


def test_missing_column(tmp_path):
    text = SIX_ROWS.replace("hardware", "hw")
    with pytest.raises(MissingColumn):
        load_csv(_write(tmp_path, text), ["size"])
    with pytest.raises(MissingColumn):
        load_csv(_write(tmp_path, SIX_ROWS), ["size", "nope"])


def test_empty_file(tmp_path):
    with pytest.raises(EmptyDataset):
        load_csv(_write(tmp_path, "size,hardware,runtime\n"), ["size"])


def test_explicit_instance_column(tmp_path):
    text = "size,hardware,runtime,run\n1,H0,1,a\n1,H0,2,b\n"
    ds = load_csv(_write(tmp_path, text), ["size"], instance_column="run")
    assert [r.instance_id for r in ds.records] == ["a", "b"]


def test_csv_roundtrip(tmp_path):
    ds = load_csv(_write(tmp_path, SIX_ROWS), ["size", "sparsity"])
    out = tmp_path / "copy.csv"
    write_csv(ds, out)
    again = load_csv(out, ["size", "sparsity"], instance_column="instance_id")
    key = lambda r: (r.instance_id, r.observation.hardware_id)
    assert sorted(ds.records, key=key) == sorted(again.records, key=key)


def test_hardware_sidecar(tmp_path, ndp_hardware):
    p = tmp_path / "hw.csv"
    hw = ndp_hardware + (HardwareConfig("H9", 1, 2, cost_weight=0.25),)
    write_hardware_csv(hw, p)
    assert load_hardware_csv(p) == hw
    _write(tmp_path, "id,cpus\nH0,2\n", "bad.csv")
    with pytest.raises(MissingColumn):
        load_hardware_csv(tmp_path / "bad.csv")
    _write(tmp_path, "id,cpus,memory_gb\nH0,0,2\n", "bad2.csv")
    with pytest.raises(ParseError):
        load_hardware_csv(tmp_path / "bad2.csv")


def _records(rows):
    return [RunRecord(i, Observation(FeatureVector([x], ["x"]), h, r)) for i, x, h, r in rows]


def test_replay_drops_incomplete():
    rows = [("a", 1, "H0", 1), ("a", 1, "H1", 2), ("a", 1, "H2", 3),
            ("b", 2, "H0", 4), ("b", 2, "H1", 5)]
    ds = Dataset.from_records(_records(rows))
    env = build_replay(ds, complete_only=True)
    assert len(env) == 1 and env.n_dropped == 1
    assert set(env.instances[0].runtimes) == ds.hardware_ids
    loose = build_replay(ds, complete_only=False)
    assert len(loose) == 2
    with pytest.raises(MissingArm):
        observe(loose, 1, "H2")


def test_replay_no_complete_instances():
    ds = Dataset.from_records(_records([("a", 1, "H0", 1), ("b", 2, "H1", 2)]))
    with pytest.raises(NoCompleteInstances):
        build_replay(ds, complete_only=True)


def test_replay_averages_duplicates():
    ds = Dataset.from_records(_records([("a", 1, "H0", 10), ("a", 1, "H0", 20), ("a", 1, "H1", 1)]))
    env = build_replay(ds)
    assert observe(env, 0, "H0") == 15
    assert observe(env, 0, "H1") == 1
    assert observe(env, 0, "H1") == observe(env, 0, "H1")


def test_replay_is_read_only():
    env = build_replay(Dataset.from_records(_records([("a", 1, "H0", 42.0)])))
    assert observe(env, 0, "H0") == 42.0
    with pytest.raises(ValueError):
        env.R[0, 0] = 1.0


def test_sample_rounds(tmp_path):
    env = build_replay(load_csv(_write(tmp_path, SIX_ROWS), ["size"]))
    a = sample_rounds(env, 50, np.random.default_rng(42))
    b = sample_rounds(env, 50, np.random.default_rng(42))
    assert np.array_equal(a, b)
    assert len(sample_rounds(env, 0, np.random.default_rng(1))) == 0
    one = build_replay(Dataset.from_records(_records([("a", 1, "H0", 1)])))
    assert set(sample_rounds(one, 20, np.random.default_rng(3))) == {0}


def test_sample_rounds_empty_env():
    from banditware.dataset import ReplayEnvironment
    empty = ReplayEnvironment([], ["H0"], ["x"], complete_only=False)
    with pytest.raises(EmptyEnvironment):
        sample_rounds(empty, 3, np.random.default_rng(0))


def test_subsample():
    rows = [(f"i{k}", k, "H0", k) for k in range(1316)]
    ds = Dataset.from_records(_records(rows))
    small = subsample(ds, 25, np.random.default_rng(0))
    assert len(small) == 25 and len(set(small.records)) == 25
    full = subsample(ds, 1316, np.random.default_rng(0))
    assert sorted(full.records, key=lambda r: r.instance_id) == sorted(ds.records, key=lambda r: r.instance_id)
    assert subsample(ds, 25, np.random.default_rng(9)) == subsample(ds, 25, np.random.default_rng(9))
    with pytest.raises(SampleTooLarge):
        subsample(ds, 1317, np.random.default_rng(0))
