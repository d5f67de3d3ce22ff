import json

import numpy as np
import pytest

from conftest import make_dataset
from tsinterp import timebase as tb
from tsinterp import trainer as tr
from tsinterp.architectures import ArchSpec, build_model
from tsinterp.errors import ConfigError, EmptyTrainSplit, UnknownSplit
from tsinterp.trainer import Batch, Checkpoint, SweepConfig, TrainConfig


def identity_task():
    return tb.TaskSpec((0, 0), ("c0",), (0, 0), ("c0",))


def ar_data(n=400, seed=0, fractions=(0.6, 0.2, 0.2)):
    rng = np.random.default_rng(seed)
    x = np.zeros(n)
    e = rng.normal(size=n)
    for t in range(2, n):
        x[t] = 0.6 * x[t - 1] - 0.3 * x[t - 2] + e[t]
    ds = make_dataset(x)
    task = tb.TaskSpec((-3, -1), ("c0",), (0, 0), ("c0",))
    return tb.prepare(ds, task, fractions)


# --- batching -------------------------------------------------------------------

def test_batches_cover_points_once():
    cfg = TrainConfig(batch_size=4, seed=1)
    pts = list(range(10, 30))
    bs = tr.make_batches(pts, cfg, epoch=3)
    assert [len(b.points) for b in bs] == [4] * 5
    assert sorted(p for b in bs for p in b.points) == pts
    again = tr.make_batches(pts, cfg, epoch=3)
    assert [b.points for b in bs] == [b.points for b in again]
    assert [b.points for b in tr.make_batches(pts, cfg, epoch=4)] != [b.points for b in bs]


def test_unshuffled_batches_keep_order():
    bs = tr.make_batches(range(7), TrainConfig(batch_size=3, shuffle=False))
    assert [b.points for b in bs] == [[0, 1, 2], [3, 4, 5], [6]]


def test_stateful_batches_respect_slices():
    cfg = TrainConfig(batch_size=2, stateful=True, shuffle=False)
    bs = tr.make_batches([0, 1, 2, 3, 4, 10, 11], cfg, [0, 0, 0, 0, 0, 1, 1])
    assert [(b.points, b.slice_id, b.reset) for b in bs] == [
        ([0, 1], 0, True), ([2, 3], 0, False), ([4], 0, False), ([10, 11], 1, True)]


def test_stateful_requires_no_shuffle():
    with pytest.raises(ConfigError):
        TrainConfig(stateful=True)


def test_stateful_training_never_carries_across_slices(rng):
    vals = rng.normal(size=120)
    stamps = [100 * k + i for k in range(4) for i in range(30)]
    ds = make_dataset(vals, stamps=stamps)
    task = tb.TaskSpec((-2, 0), ("c0",), (1, 1), ("c0",))
    data = tb.prepare(ds, task, (0.5, 0.25, 0.25), mode="by_slice")
    model = build_model(ArchSpec("LSTMv2", {"hidden_size": 3, "stateful": True}), task)
    seen = []

    def hook(event, info):
        if event == "batch":
            b = info["batch"]
            seen.append((b.slice_id, info["carried"], set(data.slice_ids(b.points))))

    tr.train(model, data, TrainConfig(batch_size=5, stateful=True, shuffle=False, max_epochs=2), hooks=hook)
    assert seen
    prev = None
    for sid, carried, sids in seen:
        assert sids == {sid}
        if carried:
            assert prev == sid
        prev = sid
    assert any(c for _, c, _ in seen)


# --- training -------------------------------------------------------------------

def test_bias_only_model_learns_constant():
    ds = make_dataset(np.column_stack([np.zeros(50), np.full(50, 3.0)]), names=["x", "y"])
    task = tb.TaskSpec((0, 0), ("x",), (0, 0), ("y",))
    data = tb.prepare(ds, task, (0.8, 0.2, 0.0), scale=False)
    model = build_model(ArchSpec("MLP", {"widths": []}), task)
    ck = tr.train(model, data, TrainConfig(lr=0.1, batch_size=10, max_epochs=400, patience=400))
    assert ck.curves[-1]["train_loss"] < 1e-6
    assert abs(ck.params["head.b"][0] - 3.0) < 1e-3


def test_patience_zero_stops_after_first_stale_epoch():
    data = ar_data()
    model = build_model(ArchSpec("MLP", {"widths": [4]}), data.task)
    ck = tr.train(model, data, TrainConfig(lr=0.5, optimizer="sgd", max_epochs=200, patience=0))
    assert len(ck.curves) == ck.best_epoch + 2 or len(ck.curves) == 200
    vals = [c["val_loss"] for c in ck.curves]
    assert ck.best_val == min(vals) and vals.index(min(vals)) == ck.best_epoch


def test_training_is_deterministic():
    data = ar_data()
    runs = []
    for _ in range(2):
        model = build_model(ArchSpec("MLP", {"widths": [8]}), data.task, seed=3)
        runs.append(tr.train(model, data, TrainConfig(max_epochs=5, seed=9)))
    assert runs[0].curves == runs[1].curves
    for k in runs[0].params:
        np.testing.assert_array_equal(runs[0].params[k], runs[1].params[k])


def test_training_reduces_loss():
    data = ar_data()
    model = build_model(ArchSpec("MLP", {"widths": [16]}), data.task)
    ck = tr.train(model, data, TrainConfig(lr=0.01, max_epochs=40, patience=40))
    assert ck.best_val < ck.curves[0]["val_loss"]
    assert ck.best_val < 0.85  # noise floor after scaling is about 0.7


def test_empty_train_split_and_loss_mismatch():
    data = ar_data()
    data.split = tb.SplitAssignment([], data.split.val, data.split.eval, (0.0, 0.5, 0.5))
    model = build_model(ArchSpec("MLP"), data.task)
    with pytest.raises(EmptyTrainSplit):
        tr.train(model, data, TrainConfig())
    with pytest.raises(ConfigError):
        tr.train(model, ar_data(), TrainConfig(loss="cross_entropy"))


# --- evaluation -------------------------------------------------------------------

def fixed_checkpoint(data, params, arch):
    return Checkpoint(arch, data.task, data.scaler, data.split, params, [], 0, 0.0, TrainConfig(), 0)


def test_evaluate_exact_and_constant_predictors():
    y = np.array([1.0, -1.0] * 20)
    ds = make_dataset(y)
    data = tb.prepare(ds, identity_task(), (0.5, 0.25, 0.25), scale=False)
    arch = ArchSpec("MLP", {"widths": []})
    exact = fixed_checkpoint(data, {"head.w": np.array([[1.0]]), "head.b": np.array([0.0])}, arch)
    res = tr.evaluate(exact, data, "eval")
    assert res["mse"] == 0.0 and res["n"] == 10
    const = fixed_checkpoint(data, {"head.w": np.array([[0.0]]), "head.b": np.array([0.0])}, arch)
    res = tr.evaluate(const, data, "val")
    assert res["mse"] == 1.0
    assert np.mean(res["per_point_loss"]) == pytest.approx(res["mse"], abs=1e-12)
    with pytest.raises(UnknownSplit, match="valid splits"):
        tr.evaluate(const, data, "valid")


def test_predictions_invert_scaling():
    data = ar_data()
    model = build_model(ArchSpec("MLP", {"widths": [4]}), data.task)
    ck = tr.train(model, data, TrainConfig(max_epochs=3))
    pts = data.split.eval[:7]
    out = tr.predict(ck, data, pts)
    mean, std = ck.scaler.mean[0], ck.scaler.std[0]
    np.testing.assert_allclose(out["raw"], out["scaled"] * std + mean, atol=1e-12)


def test_classification_probabilities(rng):
    x = rng.normal(size=120)
    lab = (x > 0).astype(float)
    ds = make_dataset(np.column_stack([x, lab]), names=["x", "lab"])
    task = tb.TaskSpec((-1, 0), ("x",), (0, 0), ("lab",), "classification", 2)
    data = tb.prepare(ds, task)
    model = build_model(ArchSpec("MLP", {"widths": [8]}), task)
    ck = tr.train(model, data, TrainConfig(loss="cross_entropy", lr=0.01, max_epochs=30))
    out = tr.predict(ck, data, data.split.eval)
    np.testing.assert_allclose(out["probs"].sum(axis=1), 1.0, atol=1e-12)
    res = tr.evaluate(ck, data, "eval")
    assert res["accuracy"] > 0.8
    assert np.sum(res["confusion"]) == res["n"]


def test_checkpoint_round_trip(tmp_path):
    data = ar_data()
    model = build_model(ArchSpec("TCN", {"channels": [4], "kernel_size": 2}), data.task, seed=2)
    ck = tr.train(model, data, TrainConfig(max_epochs=3, keep_last=True))
    ck.save(tmp_path / "ck")
    back = Checkpoint.load(tmp_path / "ck")
    assert back.digests == ck.digests and back.curves == ck.curves
    pts = data.split.val
    a = tr.predict(ck, data, pts)["raw"]
    b = tr.predict(back, data, pts)["raw"]
    assert np.max(np.abs(a - b)) <= 1e-9
    assert back.last_params is not None
    man = json.loads((tmp_path / "ck" / "manifest.json").read_text())
    n = sum(int(np.prod(e["shape"])) for e in man["params"])
    assert (tmp_path / "ck" / "params.bin").stat().st_size == 8 * n


def test_validation_loss_matches_best():
    data = ar_data()
    model = build_model(ArchSpec("MLP", {"widths": [4]}), data.task)
    ck = tr.train(model, data, TrainConfig(max_epochs=4))
    assert tr.validation_loss(ck, data) == pytest.approx(ck.best_val, abs=1e-12)


# --- sweeps -------------------------------------------------------------------------

def test_sweep_grid_and_selection(tmp_path):
    data = ar_data(n=200)
    cfg = SweepConfig({"arch.widths": [[2], [8]], "train.lr": [0.001, 0.01]})
    res = tr.sweep(cfg, TrainConfig(max_epochs=4), ArchSpec("MLP"), data, tmp_path / "r.jsonl")
    assert len(res.trials) == 4
    vals = [t["best_val"] for t in res.trials]
    assert res.best_index == int(np.argmin(vals))
    assert res.checkpoint.best_val == min(vals)
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert [json.loads(line)["trial_id"] for line in lines] == [0, 1, 2, 3]
    seeds = {tr.trial_seed(0, i) for i in range(4)}
    assert len(seeds) == 4


def test_sweep_without_consolidation():
    data = ar_data(n=200)
    res = tr.sweep(SweepConfig({"train.lr": [0.001, 0.01]}, consolidate=False),
                   TrainConfig(max_epochs=2), ArchSpec("MLP", {"widths": [2]}), data)
    assert res.checkpoint is None and res.best_index is not None


def test_sweep_threads_match_serial():
    data = ar_data(n=200)
    cfg = SweepConfig({"train.lr": [0.001, 0.01, 0.03]})
    a = tr.sweep(cfg, TrainConfig(max_epochs=3), ArchSpec("MLP", {"widths": [3]}), data)
    b = tr.sweep(cfg, TrainConfig(max_epochs=3), ArchSpec("MLP", {"widths": [3]}), data, workers=3)
    assert a.trials == b.trials


def test_override_prefixes():
    arch, cfg = tr.apply_overrides(ArchSpec("MLP"), TrainConfig(), {"arch.widths": [3], "train.lr": 0.5})
    assert arch.hyperparams["widths"] == [3] and cfg.lr == 0.5
    with pytest.raises(ConfigError):
        tr.apply_overrides(ArchSpec("MLP"), TrainConfig(), {"model.widths": [3]})


def test_curves_csv():
    text = tr.curves_csv([{"epoch": 0, "train_loss": 0.5, "val_loss": 0.25}])
    assert text == "epoch,train_loss,val_loss\n0,0.5,0.25\n"
    assert isinstance(Batch([1]).reset, bool)
