import json

import numpy as np
import pytest

import modforge


def test_worked_example():
    a = np.array([[2, 2, 0], [2, 2, 0], [0, 0, 2]], dtype=float)
    v = modforge.evaluate(a, [0, 0, 1], [0, 0, 1], 2)
    assert v["xi"] == pytest.approx(2.0)
    assert v["B"] == pytest.approx(1.6)
    assert v["L"] == pytest.approx(3.2)


def test_zscore_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 9)) * 3 + 1
    z, mean, std = modforge.zscore(a)
    np.testing.assert_allclose(mean, a.mean(axis=1))
    np.testing.assert_allclose(std, a.std(axis=1))
    np.testing.assert_allclose(z, (a - a.mean(axis=1, keepdims=True)) / a.std(axis=1, keepdims=True))


def test_planted_recovery_and_features():
    a, neuron_truth, sample_truth = modforge.synth(seed=3)
    z, _, _ = modforge.zscore(a)
    res = modforge.discover(z, 7, init="random", threads=2)
    assert res["status"] == "converged"
    assert modforge.adjusted_rand_index(res["neuron_assignment"], neuron_truth) == 1.0
    assert modforge.adjusted_rand_index(res["sample_assignment"], sample_truth) == 1.0
    x = modforge.extract_features(z, res["neuron_assignment"], res["sample_assignment"], 7)
    assert x.shape == (70, 7)
    labels = [f"module_{k}" for k in sample_truth]
    rep = modforge.train_eval_classifier(x, labels)
    assert rep["accuracy"] >= 0.95
    h = modforge.block_heatmap(z, res["neuron_assignment"], res["sample_assignment"], 7)
    assert np.trace(h) / 7 > (h.sum() - np.trace(h)) / 42


def test_errors_surface_as_value_errors():
    with pytest.raises(modforge.ConstraintError):
        modforge.evaluate(np.ones((3, 3)), [0, 0, 0], [0, 1, 1], 2)
    with pytest.raises(ValueError):
        modforge.discover(np.ones((3, 3)), 4)


def test_cli_round_trip(tmp_path):
    prefix = str(tmp_path / "fx")
    code, _, _ = modforge.run_cli(["synth", "--out-prefix", prefix, "--n", "40", "--m", "20", "--k", "3"])
    assert code == 0
    # The payload is a standard .npy file.
    raw = np.load(prefix + ".npy")
    assert raw.shape == (40, 20)
    values, normalized = modforge.load_matrix(prefix + ".npy", prefix + ".meta.json")
    np.testing.assert_array_equal(values, raw)
    assert not normalized
    code, out, _ = modforge.run_cli(["discover", "--activations", prefix + ".npy", "--meta", prefix + ".meta.json",
                                     "--k", "3", "--out", str(tmp_path / "run.json")])
    assert code == 0
    assert "xi" in out
    report = json.loads((tmp_path / "run.json").read_text())
    assert len(report["neuron_assignment"]) == 40
    assert modforge.run_cli(["discover", "--k", "0"])[0] == 1


def test_reads_numpy_written_float32(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    np.save(tmp_path / "a.npy", a)
    meta = {"neurons": [{"layer": 0, "index": i} for i in range(2)],
            "samples": [{"id": f"s{j}", "label": None, "token_count": 4} for j in range(3)]}
    (tmp_path / "a.meta.json").write_text(json.dumps(meta))
    values, _ = modforge.load_matrix(str(tmp_path / "a.npy"), str(tmp_path / "a.meta.json"))
    np.testing.assert_array_equal(values, a.astype(np.float64))
