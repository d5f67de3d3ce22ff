"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import json
import time
import warnings

import numpy as np
import pytest

from conftest import make_dataset
from tsinterp import interpreter as ip
from tsinterp import tensorcore as tc
from tsinterp import timebase as tb
from tsinterp import trainer as tr
from tsinterp.architectures import ArchSpec, build_model
from tsinterp.cli import main
from tsinterp.errors import DegenerateSplit, EmptyTask, ReceptiveFieldWarning
from tsinterp.tensorcore import Tensor

from test_tensorcore import PRIMITIVES


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


# --- oracles --------------------------------------------------------------------------

def random_dataset(rng, n_max=200):
    n = int(rng.integers(1, n_max + 1))
    c = int(rng.integers(1, 4))
    steps = np.where(rng.random(n - 1) < 0.05, rng.integers(2, 6, size=n - 1), 1)
    stamps = np.concatenate([[0], np.cumsum(steps)]).astype(int)
    return make_dataset(rng.normal(size=(n, c)), stamps=stamps), stamps


def gap_oracle(stamps, delta=1):
    """Slice boundaries by scanning consecutive timestamp differences."""
    bounds = [0] + [i for i in range(1, len(stamps)) if stamps[i] - stamps[i - 1] > delta] + [len(stamps)]
    return list(zip(bounds[:-1], bounds[1:]))


def oracle_windows(values, bounds, task):
    """Brute force: every row, every delay, plain list indexing."""
    names = [f"c{j}" for j in range(values.shape[1])]
    ic = [names.index(c) for c in task.in_components]
    oc = [names.index(c) for c in task.out_components]
    a, b = task.in_delays
    c, d = task.out_delays
    out = {}
    for lo, hi in bounds:
        for t in range(lo, hi):
            inside = [lo <= t + k < hi for k in range(a, b + 1)]
            inside_out = [lo <= t + k < hi for k in range(c, d + 1)]
            if task.edge_policy == "drop" and not (all(inside) and all(inside_out)):
                continue

            def cell(r, j):
                if lo <= r < hi:
                    return values[r][j]
                if task.edge_policy == "pad_zero":
                    return 0.0
                return values[min(max(r, lo), hi - 1)][j]

            X = [[cell(t + k, j) for j in ic] for k in range(a, b + 1)]
            Y = [[cell(t + k, j) for j in oc] for k in range(c, d + 1)]
            out[t] = (np.array(X), np.array(Y))
    return out


def random_task(rng, c):
    a, b = sorted(rng.integers(-6, 7, size=2))
    cc, d = sorted(rng.integers(-6, 7, size=2))
    names = [f"c{j}" for j in range(c)]
    ins = list(rng.choice(names, size=int(rng.integers(1, c + 1)), replace=False))
    outs = list(rng.choice(names, size=int(rng.integers(1, c + 1)), replace=False))
    policy = str(rng.choice(["drop", "drop", "pad_zero", "pad_edge"]))
    return tb.TaskSpec((int(a), int(b)), ins, (int(cc), int(d)), outs, edge_policy=policy)


# --- criteria ---------------------------------------------------------------------------

def test_01_windowing_oracle(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    mismatches, windows = 0, 0
    for _ in range(200):
        ds, stamps = random_dataset(rng)
        task = random_task(rng, ds.values.shape[1])
        expected = oracle_windows(ds.values, gap_oracle(stamps), task)
        try:
            pts = tb.enumerate_prediction_points(ds, task)
        except EmptyTask:
            pts = []
        if pts != sorted(expected):
            mismatches += 1
            continue
        for t in pts:
            wp = tb.build_window_pair(ds, t, task)
            X, Y = expected[t]
            windows += 1
            if not (np.array_equal(wp.X, X) and np.array_equal(wp.Y, Y)):
                mismatches += 1
        if pts:
            Xs, Ys = tb.build_windows(ds, pts, task)
            if not all(np.array_equal(Xs[i], expected[t][0]) and np.array_equal(Ys[i], expected[t][1])
                       for i, t in enumerate(pts)):
                mismatches += 1
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 10,
           f"windowing oracle: 200 cases, {windows} windows, {mismatches} mismatches, {elapsed:.2f}s (< 10s)")


def test_02_task_flavours(report):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(2000):
        task = random_task(rng, 3)
        a, b = task.in_delays
        c, d = task.out_delays
        shared = set(task.out_components) <= set(task.in_components)
        causal = a <= b < c <= d
        bad += tb.is_causal(task) != causal
        bad += tb.is_autoregressive(task) != (shared and causal)
        bad += tb.is_single_step(task) != (c == d)
        bad += tb.is_single_step(task) and task.l_out != 1
        bad += tb.is_univariate(task) != (len(task.out_components) == 1)
        if causal:
            t = int(rng.integers(10, 100))
            bad += not max(range(t + a, t + b + 1)) < min(range(t + c, t + d + 1))
    report(2, bad == 0, f"task-flavour predicates on 2000 generated tasks: {bad} disagreements")


def test_03_tcn_causality(report):
    rng = np.random.default_rng(3)
    leaks, zero_fail, checked = 0, 0, 0
    for cfg in range(50):
        blocks = int(rng.integers(1, 4))
        hp = {
            "channels": [int(v) for v in rng.integers(1, 5, size=blocks)],
            "kernel_size": int(rng.integers(1, 5)),
            "dilations": [int(v) for v in rng.integers(1, 4, size=blocks)],
            "convs_per_block": int(rng.integers(1, 3)),
            "activation": str(rng.choice(["relu", "tanh"])),
        }
        L, C = int(rng.integers(4, 17)), int(rng.integers(1, 4))
        task = tb.TaskSpec((-(L - 1), 0), tuple(f"c{j}" for j in range(C)), (1, 1), ("c0",))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ReceptiveFieldWarning)
            model = build_model(ArchSpec("TCN", hp), task, seed=cfg)
        x = rng.normal(size=(1, L, C))
        with tc.no_grad():
            base = [f.data for f in model.features(Tensor(x))]
            for p in range(L):
                y = x.copy()
                y[0, p, :] += rng.normal(size=C) + 1.0
                for fb, fy in zip(base, model.features(Tensor(y))):
                    checked += 1
                    leaks += not np.array_equal(fb[:, :p], fy.data[:, :p])
        for q in range(L - 1):
            def fn(z, q=q):
                return model.features(z)[-1][:, q, 0]
            A, _, _ = ip.integrated_gradients(fn, x[0], steps=4)
            zero_fail += not np.all(A[q + 1:] == 0.0)
    report(3, leaks == 0 and zero_fail == 0,
           f"TCN causality over 50 configs: {checked} perturbation checks, {leaks} leaks, "
           f"{zero_fail} non-zero future attributions")


SMALL = {
    "MLP": {"widths": [5, 4], "activation": "tanh"},
    "TCN": {"channels": [3, 2], "kernel_size": 2, "dilations": [1, 1], "activation": "tanh"},
    "CNN": {"channels": [3], "kernel_size": 2, "activation": "tanh"},
    "LSTM": {"hidden_size": 3, "depth": 2},
    "LSTMv2": {"hidden_size": 3, "depth": 2},
}


def _model_grad_error(model, x):
    names = list(model.params)
    values = [x] + [model.params[n].data.copy() for n in names]

    def fn(inp, *ps):
        for n, p in zip(names, ps):
            model.params[n] = p
        return tc.sum(tc.tanh(model(inp)))

    err = tc.grad_error(tc.grad(fn, values), tc.numerical_grad(fn, values, 1e-4))
    for n, v in zip(names, values[1:]):
        model.params[n] = Tensor(v, requires_grad=True, name=n)
    return err


def test_04_gradient_checks(report):
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    errors = {}
    for name, (fn, shapes) in PRIMITIVES.items():
        inputs = [rng.normal(size=s) for s in shapes]
        errors[name] = tc.grad_error(tc.grad(fn, inputs), tc.numerical_grad(fn, inputs, 1e-4))
    task = tb.TaskSpec((-4, 0), ("a", "b"), (1, 2), ("a",))
    for name, hp in SMALL.items():
        model = build_model(ArchSpec(name, hp), task, seed=4)
        errors[name] = _model_grad_error(model, rng.normal(size=(2, 5, 2)))
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    report(4, errors[worst] < 1e-4 and elapsed < 60,
           f"gradient checks on {len(PRIMITIVES)} primitives and 5 architectures (all parameters): "
           f"worst {worst} {errors[worst]:.2e} (< 1e-4), {elapsed:.1f}s (< 60s)")


def test_05_ig_completeness(report):
    rng = np.random.default_rng(5)
    worst_ratio, linear_err = 0.0, 0.0
    for trial in range(20):
        L, C = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        task = tb.TaskSpec((-(L - 1), 0), tuple(f"c{j}" for j in range(C)), (0, 0), ("c0",))
        hp = {"widths": [int(w) for w in rng.integers(2, 12, size=int(rng.integers(1, 3)))],
              "activation": str(rng.choice(["tanh", "sigmoid"]))}
        model = build_model(ArchSpec("MLP", hp), task, seed=trial)
        fn = ip.target_function(model, (0, 0))
        x, base = rng.normal(size=(L, C)), rng.normal(size=(L, C)) * 0.5
        A, fx, fb = ip.integrated_gradients(fn, x, base, steps=256)
        gap = abs(A.sum() - (fx - fb))
        worst_ratio = max(worst_ratio, gap / (1e-3 * abs(fx - fb) + 1e-6))
        w = rng.normal(size=(L, C))
        lin, lx, lb = ip.integrated_gradients(lambda z, w=w: tc.sum(tc.sum(z * w, axis=2), axis=1), x, base, steps=1)
        linear_err = max(linear_err, float(np.max(np.abs(lin - w * (x - base)))), abs(lin.sum() - (lx - lb)))
    report(5, worst_ratio <= 1.0 and linear_err <= 1e-9,
           f"IG completeness on 20 smooth MLPs at m=256: worst gap/bound {worst_ratio:.3f} (<= 1); "
           f"linear m=1 error {linear_err:.1e} (<= 1e-9)")


def test_06_stateful_equivalence(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for cfg in range(20):
        H, depth, C = int(rng.integers(1, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        chunks, clen, B = int(rng.integers(2, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
        comps = tuple(f"c{j}" for j in range(C))
        full_task = tb.TaskSpec((-(chunks * clen - 1), 0), comps, (1, 1), ("c0",))
        part_task = tb.TaskSpec((-(clen - 1), 0), comps, (1, 1), ("c0",))
        full = build_model(ArchSpec("LSTMv2", {"hidden_size": H, "depth": depth}), full_task, seed=cfg)
        part = build_model(ArchSpec("LSTMv2", {"hidden_size": H, "depth": depth, "stateful": True}), part_task)
        part.load_state_dict(full.state_dict())
        x = rng.normal(size=(B, chunks * clen, C))
        with tc.no_grad():
            ref = full(Tensor(x)).data
            for k in range(chunks):
                out = part(Tensor(x[:, k * clen:(k + 1) * clen])).data
        worst = max(worst, float(np.max(np.abs(out - ref))))
    report(6, worst <= 1e-5, f"LSTMv2 chunked-with-carry vs full sequence, 20 configs: max diff {worst:.2e} (<= 1e-5)")


# --- end-to-end (criteria 7 and 10) -------------------------------------------------

SYNTH = {"name": "syn", "n": 5000, "inputs": ["x"], "target": "y", "noise_std": 0.01, "seed": 11,
         "rule": [{"component": "x", "lag": 1, "coef": 0.6}, {"component": "x", "lag": 3, "coef": -0.3}]}
TRAIN = {
    "name": "recover", "dataset": "syn",
    "task": {"in_delays": [-4, 0], "in_components": ["x"], "out_delays": [0, 0], "out_components": ["y"]},
    "arch": {"name": "MLP", "hyperparams": {"widths": [32]}},
    "train": {"lr": 0.003, "batch_size": 64, "max_epochs": 150, "patience": 20, "seed": 5},
    "split": {"fractions": [0.7, 0.15, 0.15]},
}
INTERPRET = {"tag": "ig", "method": "integrated_gradients", "ig_steps": 64, "baseline": "train_mean",
             "selection": {"mode": "random", "k": 50, "split": "eval", "seed": 2}}


def run_pipeline(tmp):
    tmp.mkdir(parents=True, exist_ok=True)
    root = tmp / "exp"
    for name, obj in (("synth.json", SYNTH), ("train.json", TRAIN), ("interpret.json", INTERPRET)):
        (tmp / name).write_text(json.dumps(obj))
    codes = [
        main(["synth", "--config", str(tmp / "synth.json"), "--out", str(tmp)]),
        main(["--root", str(root), "import", str(tmp / "syn.csv"), str(tmp / "syn.meta.json")]),
        main(["--root", str(root), "train", "--config", str(tmp / "train.json")]),
        main(["--root", str(root), "evaluate", "recover", "--split", "eval"]),
        main(["--root", str(root), "interpret", "recover", "--config", str(tmp / "interpret.json")]),
    ]
    return root / "models" / "recover", codes


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    start = time.perf_counter()
    d, codes = run_pipeline(tmp_path_factory.mktemp("e2e_a"))
    return d, codes, time.perf_counter() - start


def test_07_synthetic_recovery(report, pipeline):
    d, codes, elapsed = pipeline
    if any(codes):
        report(7, False, f"pipeline exit codes {codes}")
    mse = json.loads((d / "metrics_eval.json").read_text())["mse"]
    per_delay = json.loads((d / "interpretations/ig/importance.json").read_text())["per_delay"]
    top2 = sorted(per_delay, key=per_delay.get, reverse=True)[:2]
    ranked = ", ".join(f"{k}: {v:.3f}" for k, v in sorted(per_delay.items(), key=lambda kv: -kv[1]))
    report(7, mse <= 1e-3 and set(top2) == {"-1", "-3"} and elapsed < 300,
           f"synthetic recovery: eval MSE {mse:.2e} (<= 1e-3), delay importance [{ranked}], "
           f"top two {sorted(top2)} (want -1, -3), {elapsed:.1f}s (< 300s)")


def test_08_sweep_contract(report, tmp_path):
    ds = make_dataset(np.random.default_rng(8).normal(size=(300, 2)), names=["x", "y"])
    task = tb.TaskSpec((-3, 0), ("x", "y"), (1, 1), ("y",))
    data = tb.prepare(ds, task)
    cfg = tr.SweepConfig({"arch.widths": [[4], [8]], "train.lr": [0.001, 0.01]})
    res = tr.sweep(cfg, tr.TrainConfig(max_epochs=5, seed=3), ArchSpec("MLP"), data, tmp_path / "report.jsonl")
    records = [json.loads(line) for line in (tmp_path / "report.jsonl").read_text().splitlines()]
    vals = [r["best_val"] for r in records]
    res.checkpoint.save(tmp_path / "ck")
    restored = tr.Checkpoint.load(tmp_path / "ck")
    drift = abs(tr.validation_loss(restored, data) - restored.best_val)
    ok = (len(records) == 4 and res.best_index == int(np.argmin(vals))
          and res.checkpoint.extra["sweep_trial"] == int(np.argmin(vals)) and drift <= 1e-9)
    report(8, ok, f"sweep contract: {len(records)} trial records, kept trial {res.best_index} "
                  f"(argmin {int(np.argmin(vals))}), restored val-loss drift {drift:.1e} (<= 1e-9)")


def test_09_scaler_split_gaps(report):
    rng = np.random.default_rng(9)
    worst_rt, partition_bad, slice_bad = 0.0, 0, 0
    for _ in range(100):
        ds, stamps = random_dataset(rng, 300)
        if len(gap_oracle(stamps)) != len(ds.slices) or any(
                s.length != hi - lo for s, (lo, hi) in zip(ds.slices, gap_oracle(stamps))):
            slice_bad += 1
        task = tb.TaskSpec((-2, 0), tuple(ds.component_names), (1, 1), (ds.component_names[0],))
        try:
            pts = tb.enumerate_prediction_points(ds, task)
            split = tb.split_points(pts, (0.6, 0.2, 0.2))
        except (EmptyTask, DegenerateSplit):
            continue
        if split.train + split.val + split.eval != pts:
            partition_bad += 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sc = tb.fit_scaler(ds, task, split.train)
        z = rng.normal(size=(10, len(ds.component_names))) * 50
        worst_rt = max(worst_rt, float(np.max(np.abs(sc.invert(sc.apply(z)) - z) / np.maximum(1.0, np.abs(z)))))
    report(9, worst_rt <= 1e-9 and partition_bad == 0 and slice_bad == 0,
           f"100 random gap patterns: slice mismatches {slice_bad}, split partition failures {partition_bad}, "
           f"scaler round-trip error {worst_rt:.1e} (<= 1e-9)")


def test_10_determinism(report, pipeline, tmp_path):
    d1, _, _ = pipeline
    d2, codes = run_pipeline(tmp_path / "again")
    files = ["curves.csv"] + sorted(
        str(p.relative_to(d1)) for p in (d1 / "interpretations/ig").glob("*.csv"))
    differ = [f for f in files if not (d2 / f).exists() or (d1 / f).read_bytes() != (d2 / f).read_bytes()]
    report(10, not any(codes) and not differ,
           f"determinism: {len(files)} CSV artifacts compared byte-for-byte across two runs, {len(differ)} differ")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
