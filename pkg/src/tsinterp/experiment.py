"""Experiment directory lifecycle and the operations behind the ``tk`` commands.

Layout under the root::

    custom_datasets/<name>/   manifest.json + values.bin
    custom_archs/<name>.json  registration manifests for preset architectures
    models/<name>/            run.json, checkpoint/, curves.csv, metrics,
                              sweeps/, interpretations/<tag>/
    runs.jsonl                append-only operation log
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import architectures as archs
from . import interpreter as interp
from . import timebase as tb
from . import trainer as tr
from .errors import (
    AlreadyExists,
    ConfigError,
    Locked,
    MissingArtifact,
    UsageError,
)
from .plots import heatmap_svg, line_chart_svg

log = logging.getLogger(__name__)


def canonical(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_artifact(path, content, force=False):
    """Write ``content``; an existing different file is only replaced with ``force``."""
    path = Path(path)
    data = content.encode() if isinstance(content, str) else content
    if path.exists() and not force and path.read_bytes() != data:
        raise AlreadyExists(f"{path} exists with different content; use --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


class ExperimentDir:
    SUBDIRS = ("custom_datasets", "models", "custom_archs")

    def __init__(self, root):
        self.root = Path(root)

    def ensure(self):
        for sub in self.SUBDIRS:
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        return self

    def dataset_dir(self, name) -> Path:
        return self.root / "custom_datasets" / name

    def model_dir(self, name) -> Path:
        return self.root / "models" / name

    def resolve_model(self, ref) -> Path:
        p = Path(ref)
        if (p / "checkpoint" / "manifest.json").exists():
            return p
        d = self.model_dir(str(ref))
        if not (d / "checkpoint" / "manifest.json").exists():
            raise MissingArtifact(f"no checkpoint for model {ref!r}")
        return d

    @contextlib.contextmanager
    def lock(self):
        """Exclusive per-directory lock held for the duration of one command."""
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / ".lock"
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise Locked(f"{path} exists: another command is running on this experiment") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            path.unlink(missing_ok=True)

    def log_run(self, op, config=None, inputs=None, outputs=()):
        rec = {
            "op": op,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "config_digest": tr.digest(config) if config is not None else None,
            "inputs": inputs or {},
            "outputs": [str(o) for o in outputs],
            "version": __version__,
        }
        with open(self.root / "runs.jsonl", "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def load_custom_archs(self):
        """Register every manifest in custom_archs/ (conformance runs on registration)."""
        names = []
        for path in sorted((self.root / "custom_archs").glob("*.json")):
            man = json.loads(path.read_text())
            name = man["name"]
            if name in archs.available():
                continue
            archs.register_architecture(name, archs.preset(man["base"], man.get("hyperparams", {})),
                                        man.get("probe_hyperparams"))
            names.append(name)
        return names


# --- dataset store ------------------------------------------------------------

def dataset_manifest(ds: tb.TimeSeriesDataset) -> dict:
    offsets = ds.offsets
    return {
        "name": ds.name,
        "delta_seconds": ds.delta,
        "components": [{"name": c.name, "role": c.role} for c in ds.components],
        "n_total": ds.n_total,
        "slices": [
            {
                "start_ts": int(s.start_ts),
                "start": tb.format_timestamp(s.start_ts),
                "length": s.length,
                "offset": int(offsets[i]),
                "synthetic_rows": np.flatnonzero(s.synthetic).tolist(),
            }
            for i, s in enumerate(ds.slices)
        ],
        "layout": "row-major little-endian float64, rows x components",
    }


def dataset_digest(manifest, values_bytes) -> str:
    core = {k: v for k, v in manifest.items() if k != "digest"}
    return tr.digest(tr.digest(core).encode() + values_bytes)


def save_dataset(exp: ExperimentDir, ds: tb.TimeSeriesDataset, force=False) -> str:
    d = exp.dataset_dir(ds.name)
    if d.exists() and not force:
        raise AlreadyExists(f"dataset {ds.name!r} already imported; use --force to replace")
    d.mkdir(parents=True, exist_ok=True)
    values = np.ascontiguousarray(ds.values, dtype="<f8").tobytes()
    man = dataset_manifest(ds)
    man["digest"] = dataset_digest(man, values)
    (d / "values.bin").write_bytes(values)
    (d / "manifest.json").write_text(canonical(man))
    return man["digest"]


def load_dataset(exp: ExperimentDir, name):
    d = exp.dataset_dir(name)
    if not (d / "manifest.json").exists():
        raise MissingArtifact(f"dataset {name!r} not found under {d.parent}")
    man = json.loads((d / "manifest.json").read_text())
    ncomp = len(man["components"])
    values = np.frombuffer((d / "values.bin").read_bytes(), dtype="<f8").reshape(-1, ncomp)
    slices = []
    for s in man["slices"]:
        synth = np.zeros(s["length"], dtype=bool)
        synth[s["synthetic_rows"]] = True
        slices.append(tb.Slice(s["start_ts"], values[s["offset"]: s["offset"] + s["length"]], synth))
    comps = [tb.Component(c["name"], c["role"]) for c in man["components"]]
    return tb.TimeSeriesDataset(man["name"], comps, man["delta_seconds"], slices), man["digest"]


def cmd_import(exp: ExperimentDir, csv_path, meta_path, force=False):
    ds = tb.read_csv_dataset(csv_path, meta_path)
    exp.ensure()
    dig = save_dataset(exp, ds, force)
    exp.log_run("import", {"csv": str(csv_path), "meta": str(meta_path)}, {"dataset": dig},
                [exp.dataset_dir(ds.name)])
    return ds, dig


# --- synthetic data -----------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Inputs are seeded noise (or sinusoid mixtures); the target follows a
    linear lag rule plus Gaussian noise of std ``noise_std``."""

    name: str = "synthetic"
    n: int = 1000
    inputs: list = field(default_factory=lambda: [{"name": "x", "kind": "gaussian"}])
    target: str = "y"
    rule: list = field(default_factory=list)  # [{"component", "lag", "coef"}]
    history: int | None = None
    noise_std: float = 0.0
    gaps: list = field(default_factory=list)  # [{"at": row, "length": steps}]
    seed: int = 0
    delta_seconds: int = 60
    start: str = "2020-01-01T00:00:00Z"

    def __post_init__(self):
        self.inputs = [i if isinstance(i, dict) else {"name": i, "kind": "gaussian"} for i in self.inputs]
        names = {i["name"] for i in self.inputs}
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.target in names:
            raise ConfigError("target must differ from the input components")
        max_lag = max((int(t["lag"]) for t in self.rule), default=0)
        hist = max_lag if self.history is None else int(self.history)
        for term in self.rule:
            if term["component"] not in names:
                raise ConfigError(f"rule references unknown component {term['component']!r}")
            if not 0 <= int(term["lag"]) <= hist:
                raise ConfigError(f"rule lag {term['lag']} outside declared history {hist}")
        for i in self.inputs:
            if i.get("kind", "gaussian") not in ("gaussian", "sinusoid"):
                raise ConfigError(f"unknown input kind {i.get('kind')!r}")
        self.history = hist
        spans = sorted((int(g["at"]), int(g["length"])) for g in self.gaps)
        prev_end = 0
        for at, length in spans:
            if length < 1 or at <= prev_end or at + length >= self.n:
                raise ConfigError(f"gap at {at} of length {length} must lie strictly inside the series and not touch another gap")
            prev_end = at + length

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def generate_synthetic(spec: SyntheticSpec):
    """Returns (dataset, rule description). The rule holds exactly at every row
    when ``noise_std`` is 0 (a burn-in of ``history`` rows precedes row 0)."""
    rng = np.random.default_rng(spec.seed)
    total = spec.n + spec.history
    cols = {}
    for inp in spec.inputs:
        if inp.get("kind", "gaussian") == "gaussian":
            cols[inp["name"]] = rng.normal(0.0, float(inp.get("std", 1.0)), size=total)
        else:
            t = np.arange(total)
            periods = inp.get("periods", [24, 7])
            amps = inp.get("amplitudes", [1.0] * len(periods))
            x = sum(a * np.sin(2 * np.pi * t / p) for a, p in zip(amps, periods))
            cols[inp["name"]] = x + rng.normal(0.0, float(inp.get("std", 0.1)), size=total)
    y = np.zeros(total)
    h = spec.history
    for term in spec.rule:
        lag = int(term["lag"])
        y[h:] += float(term["coef"]) * cols[term["component"]][h - lag: total - lag]
    y[h:] += rng.normal(0.0, spec.noise_std, size=spec.n) if spec.noise_std > 0 else 0.0
    keep = np.ones(spec.n, dtype=bool)
    for g in spec.gaps:
        keep[int(g["at"]): int(g["at"]) + int(g["length"])] = False
    start = tb.parse_timestamp(spec.start)
    stamps = start + spec.delta_seconds * np.arange(spec.n, dtype=np.int64)
    table = {k: v[h:][keep] for k, v in cols.items()}
    table[spec.target] = y[h:][keep]
    meta = {
        "name": spec.name,
        "delta_seconds": spec.delta_seconds,
        "components": [{"name": i["name"], "role": "input"} for i in spec.inputs]
        + [{"name": spec.target, "role": "output"}],
    }
    ds = tb.import_dataset(stamps[keep], table, meta)
    rule = {
        "target": spec.target,
        "terms": spec.rule,
        "noise_std": spec.noise_std,
        "formula": f"{spec.target}_t = "
        + " + ".join(f"{float(t['coef'])}*{t['component']}_(t-{int(t['lag'])})" for t in spec.rule)
        + (" + eps" if spec.noise_std > 0 else ""),
        "spec": spec.__dict__,
    }
    return ds, rule


def cmd_synth(spec: SyntheticSpec, out_dir, force=False):
    ds, rule = generate_synthetic(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path, rule_path = (out / f"{spec.name}.csv", out / f"{spec.name}.meta.json",
                                      out / f"{spec.name}.rule.json")
    for p in (csv_path, meta_path, rule_path):
        if p.exists() and not force:
            raise AlreadyExists(f"{p} exists; use --force to overwrite")
    tb.write_csv_dataset(ds, csv_path, meta_path)
    rule_path.write_text(canonical(rule))
    return csv_path, meta_path, rule_path


# --- run configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    name: str
    dataset: str
    task: tb.TaskSpec
    arch: archs.ArchSpec
    train: tr.TrainConfig
    fractions: tuple = (0.7, 0.15, 0.15)
    split_mode: str = "chronological"
    stride: int = 1
    limit: int | None = None
    interpolate: dict | None = None
    sweep: tr.SweepConfig | None = None
    raw: dict = field(default_factory=dict)

    @property
    def prep(self):
        return {"fractions": list(self.fractions), "split_mode": self.split_mode, "stride": self.stride,
                "limit": self.limit, "interpolate": self.interpolate}


TOP_KEYS = {"name", "dataset", "task", "arch", "train", "split", "sampling", "interpolate", "sweep"}


def parse_run_config(raw: dict, need_sweep=False) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for key in ("name", "dataset", "task", "arch"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    try:
        task = tb.TaskSpec.from_dict(raw["task"])
        arch_raw = raw["arch"]
        arch = archs.ArchSpec(arch_raw.get("name") or arch_raw["arch_name"], dict(arch_raw.get("hyperparams", {})))
        train_raw = dict(raw.get("train", {}))
        if task.kind == "classification":
            train_raw.setdefault("loss", "cross_entropy")
        train = tr.TrainConfig.from_dict(train_raw)
        split = raw.get("split", {})
        sampling = raw.get("sampling", {})
        sweep = None
        if need_sweep:
            if "sweep" not in raw:
                raise ConfigError("sweep config needs a 'sweep' section")
            s = raw["sweep"]
            sweep = tr.SweepConfig(s["grid"], s.get("selection_metric", "val_loss"), bool(s.get("consolidate", True)))
        return RunConfig(
            name=str(raw["name"]),
            dataset=str(raw["dataset"]),
            task=task,
            arch=arch,
            train=train,
            fractions=tuple(split.get("fractions", (0.7, 0.15, 0.15))),
            split_mode=split.get("mode", "chronological"),
            stride=int(sampling.get("stride", 1)),
            limit=sampling.get("limit"),
            interpolate=raw.get("interpolate"),
            sweep=sweep,
            raw=raw,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc!r}") from exc


def prepare_data(exp: ExperimentDir, rc: RunConfig):
    ds, dig = load_dataset(exp, rc.dataset)
    if rc.interpolate:
        ds = tb.interpolate_gaps(ds, int(rc.interpolate["max_gap"]), rc.interpolate.get("method", "linear"))
    data = tb.prepare(ds, rc.task, rc.fractions, rc.split_mode, rc.stride, rc.limit)
    return data, dig


def data_for_checkpoint(exp: ExperimentDir, ckpt: tr.Checkpoint) -> tb.SupervisedData:
    ds, dig = load_dataset(exp, ckpt.dataset)
    if ckpt.dataset_digest and dig != ckpt.dataset_digest:
        raise MissingArtifact(f"dataset {ckpt.dataset!r} changed since the model was trained")
    interp_cfg = ckpt.extra.get("prep", {}).get("interpolate")
    if interp_cfg:
        ds = tb.interpolate_gaps(ds, int(interp_cfg["max_gap"]), interp_cfg.get("method", "linear"))
    return tb.supervised_from_split(ds, ckpt.task, ckpt.split, ckpt.scaler)


def _model_dir_for_write(exp, name, force):
    d = exp.model_dir(name)
    if (d / "checkpoint").exists() and not force:
        raise AlreadyExists(f"model {name!r} already exists; use --force to overwrite")
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_model(d: Path, ckpt: tr.Checkpoint, rc: RunConfig, viz=False, force=False):
    ckpt.save(d / "checkpoint")
    man = json.loads((d / "checkpoint" / "manifest.json").read_text())
    run = {
        "name": rc.name,
        "config": rc.raw,
        "digests": {**man["digests"], "params": man["params_digest"]},
        "best_epoch": ckpt.best_epoch,
        "best_val": ckpt.best_val,
        "version": __version__,
    }
    write_artifact(d / "run.json", canonical(run), force=True)
    write_artifact(d / "curves.csv", tr.curves_csv(ckpt.curves), force=True)
    outputs = [d / "checkpoint", d / "curves.csv"]
    if viz:
        epochs = [c["epoch"] for c in ckpt.curves]
        svg = line_chart_svg(
            {"train_loss": (epochs, [c["train_loss"] for c in ckpt.curves]),
             "val_loss": (epochs, [c["val_loss"] for c in ckpt.curves])},
            title=f"{rc.name}: training curves", xlabel="epoch", ylabel="loss",
        )
        write_artifact(d / "curves.svg", svg, force=True)
        outputs.append(d / "curves.svg")
    return outputs


def cmd_train(exp: ExperimentDir, raw_config: dict, viz=False, force=False):
    rc = parse_run_config(raw_config)
    exp.ensure()
    exp.load_custom_archs()
    d = _model_dir_for_write(exp, rc.name, force)
    data, dig = prepare_data(exp, rc)
    model = archs.build_model(rc.arch, rc.task, rc.train.seed)
    ckpt = tr.train(model, data, rc.train, dataset_digest=dig)
    ckpt.extra["prep"] = rc.prep
    outputs = write_model(d, ckpt, rc, viz, force)
    exp.log_run("train", rc.raw, {"dataset": dig}, outputs)
    return d, ckpt


def cmd_sweep(exp: ExperimentDir, raw_config: dict, viz=False, force=False, workers=1):
    rc = parse_run_config(raw_config, need_sweep=True)
    exp.ensure()
    exp.load_custom_archs()
    d = exp.model_dir(rc.name)
    report = d / "sweeps" / "report.jsonl"
    if report.exists() and not force:
        raise AlreadyExists(f"sweep report {report} exists; use --force to overwrite")
    if rc.sweep.consolidate and (d / "checkpoint").exists() and not force:
        raise AlreadyExists(f"model {rc.name!r} already has a checkpoint; use --force to overwrite")
    data, dig = prepare_data(exp, rc)
    result = tr.sweep(rc.sweep, rc.train, rc.arch, data, report, workers, dataset_digest=dig)
    outputs = [report]
    if result.checkpoint is not None:
        result.checkpoint.extra["prep"] = rc.prep
        outputs += write_model(d, result.checkpoint, rc, viz, force)
    exp.log_run("sweep", rc.raw, {"dataset": dig}, outputs)
    return d, result


def load_checkpoint(exp: ExperimentDir, model_ref):
    exp.load_custom_archs()
    d = exp.resolve_model(model_ref)
    return d, tr.Checkpoint.load(d / "checkpoint")


def cmd_evaluate(exp: ExperimentDir, model_ref, split="val", plot_fit=False, components=None, force=False):
    if split not in tr.SPLITS:
        raise UsageError(f"unknown split {split!r}; valid splits: {', '.join(tr.SPLITS)}")
    d, ckpt = load_checkpoint(exp, model_ref)
    data = data_for_checkpoint(exp, ckpt)
    metrics = tr.evaluate(ckpt, data, split)
    out = write_artifact(d / f"metrics_{split}.json", canonical(metrics), force)
    outputs = [out]
    if plot_fit and metrics["n"]:
        outputs.append(write_artifact(d / f"fit_{split}.svg", fit_plot(ckpt, data, split, components), force))
    exp.log_run("evaluate", {"model": str(d), "split": split}, {"params": ckpt.digests}, outputs)
    return metrics, outputs


def fit_plot(ckpt, data, split, components=None) -> str:
    task = ckpt.task
    points = list(ckpt.split[split])
    if task.kind == "classification":
        m = tr.evaluate(ckpt, data, split)
        labels = [str(k) for k in range(task.n_classes)]
        return heatmap_svg(np.array(m["confusion"], float), labels, labels,
                           f"confusion ({split}): rows true, columns predicted", signed=False)
    comps = list(components or task.out_components)
    unknown = set(comps) - set(task.out_components)
    if unknown:
        raise UsageError(f"components {sorted(unknown)} are not outputs of this model")
    pred = tr.predict(ckpt, data, points)["raw"]
    truth = data.Y_raw[data.rows(points)]
    hours = (data.dataset.timestamps[np.asarray(points)] - data.dataset.timestamps[0]) / 3600.0
    series = {}
    for name in comps:
        j = task.out_components.index(name)
        series[f"{name} prediction"] = (hours, pred[:, 0, j])
    svg = line_chart_svg(series, title=f"fit on {split} (delay {task.out_delays[0]})",
                         xlabel="hours since dataset start", ylabel="value")
    # targets drawn as reference lines, one per component
    ref = line_chart_svg({f"{n} target": (hours, truth[:, 0, task.out_components.index(n)]) for n in comps})
    lines = [ln.replace('class="series"', 'class="reference" stroke-dasharray="3,2"')
             for ln in ref.splitlines() if "<polyline" in ln]
    return svg.replace("</svg>", "\n".join(lines) + "\n</svg>")


# --- interpretation -------------------------------------------------------------

INTERPRET_KEYS = {"tag", "method", "target", "baseline", "ig_steps", "patch", "selection"}


def _parse_target(raw, task):
    if task.kind == "classification":
        if raw in (None, "predicted"):
            return "predicted"
        return int(raw)
    if raw is None:
        if task.output_shape != (1, 1):
            raise ConfigError("multi-cell outputs need an explicit target {row, component}")
        return (0, 0)
    if isinstance(raw, dict):
        comp = raw["component"]
        if comp not in task.out_components:
            raise ConfigError(f"target component {comp!r} is not an output")
        return (int(raw.get("row", 0)), task.out_components.index(comp))
    return (int(raw[0]), int(raw[1]))


def _baseline(kind, data, ckpt):
    task = ckpt.task
    shape = task.input_shape
    if kind is None or kind == "train_mean":
        base = np.zeros(shape)
        train_X = data.X[data.rows(ckpt.split.train)]
        for j, name in enumerate(task.in_components):
            if name not in ckpt.scaler.scaled:
                base[:, j] = train_X[:, :, j].mean()
        return base, "train_mean"
    if kind == "zero":
        return np.zeros(shape), "zero"
    arr = np.asarray(kind, dtype=np.float64)
    if arr.shape != shape:
        raise ConfigError(f"custom baseline must have shape {shape}, got {arr.shape}")
    return arr, "custom"


def cmd_interpret(exp: ExperimentDir, model_ref, raw_config: dict, force=False):
    extra = set(raw_config) - INTERPRET_KEYS
    if extra:
        raise ConfigError(f"unknown interpret config keys: {sorted(extra)}")
    d, ckpt = load_checkpoint(exp, model_ref)
    data = data_for_checkpoint(exp, ckpt)
    task = ckpt.task
    method = raw_config.get("method", "integrated_gradients")
    if method not in interp.METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {interp.METHODS}")
    try:
        sel = interp.SelectionSpec(**raw_config.get("selection", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid selection: {exc}") from exc
    target = _parse_target(raw_config.get("target"), task)
    baseline, base_name = _baseline(raw_config.get("baseline", "train_mean"), data, ckpt)
    steps = int(raw_config.get("ig_steps", 64))
    patch = tuple(raw_config.get("patch", (1, 1)))
    tag = str(raw_config.get("tag", f"{method}_{sel.split}_{sel.mode}"))
    out = d / "interpretations" / tag
    if out.exists() and not force:
        raise AlreadyExists(f"interpretation {tag!r} exists; use --force to overwrite")

    metrics = tr.evaluate(ckpt, data, sel.split)
    split_points = metrics["points"]
    chosen = interp.select_points(metrics["per_point_loss"], sel)
    points = [split_points[i] for i in chosen]
    model = ckpt.restore_model()
    rows = data.rows(points)
    raw_X = tb.build_windows(data.dataset, points, task, None)[0]
    result = interp.attribute(model, data.X[rows], points, method, target, baseline, base_name,
                              steps, patch, raw_X)
    importance = interp.aggregate_importance([result])

    out.mkdir(parents=True, exist_ok=True)
    delays = list(range(task.in_delays[0], task.in_delays[1] + 1))
    comps = list(task.in_components)
    per_point = []
    stamps = data.dataset.timestamps
    for i, pa in enumerate(result.points):
        stem = out / f"point_{int(pa.point)}"
        interp.render_attribution(pa.matrix, stem, delays, comps,
                                  f"{method} at {tb.format_timestamp(stamps[pa.point])}", signed=True)
        per_point.append({**pa.to_dict(), "position_in_split": int(chosen[i]),
                          "timestamp": tb.format_timestamp(stamps[pa.point]),
                          "loss": metrics["per_point_loss"][chosen[i]],
                          "raw_input": np.asarray(pa.raw_input).tolist()})
    interp.render_attribution(importance.matrix, out / "importance", delays, comps,
                              "mean |attribution|", signed=False)
    request = {
        "method": method,
        "target": target if isinstance(target, str) else list(np.atleast_1d(target).tolist()),
        "baseline": base_name,
        "ig_steps": steps,
        "patch": list(patch),
        "selection": sel.__dict__,
        "model": str(d.name),
        "params_digest": json.loads((d / "run.json").read_text())["digests"]["params"]
        if (d / "run.json").exists() else None,
        "units": "scaled input space",
    }
    write_artifact(out / "request.json", canonical(request), force=True)
    write_artifact(out / "points.json", canonical(per_point), force=True)
    write_artifact(out / "importance.json", canonical({
        "per_component": dict(zip(comps, importance.per_component.tolist())),
        "per_delay": dict(zip(map(str, delays), importance.per_delay.tolist())),
    }), force=True)
    exp.log_run("interpret", raw_config, {"model": str(d)}, [out])
    return out, result, importance


# --- verification -----------------------------------------------------------------

def verify(exp: ExperimentDir) -> list:
    """Walk every model directory and report digest inconsistencies."""
    problems = []
    for d in sorted((exp.root / "models").glob("*")):
        ck = d / "checkpoint" / "manifest.json"
        if not ck.exists():
            if not (d / "sweeps").exists():
                problems.append(f"{d.name}: no checkpoint")
            continue
        try:
            ckpt = tr.Checkpoint.load(d / "checkpoint")
        except Exception as exc:  # noqa: BLE001 - any unreadable checkpoint is a finding
            problems.append(f"{d.name}: unreadable checkpoint ({exc})")
            continue
        man = json.loads(ck.read_text())
        recorded = man["digests"]
        for key, value in ckpt.digests.items():
            if key != "dataset" and recorded.get(key) != value:
                problems.append(f"{d.name}: {key} digest mismatch")
        params = tr.digest((d / "checkpoint" / "params.bin").read_bytes())
        if params != man.get("params_digest"):
            problems.append(f"{d.name}: params digest mismatch")
        ds_man = exp.dataset_dir(ckpt.dataset) / "manifest.json"
        if not ds_man.exists():
            problems.append(f"{d.name}: dataset {ckpt.dataset!r} missing")
        elif json.loads(ds_man.read_text())["digest"] != recorded.get("dataset"):
            problems.append(f"{d.name}: dataset digest mismatch")
        run = d / "run.json"
        if run.exists():
            rd = json.loads(run.read_text())["digests"]
            if any(rd.get(k) != v for k, v in {**recorded, "params": params}.items()):
                problems.append(f"{d.name}: run.json digests disagree with checkpoint")
            for req in sorted((d / "interpretations").glob("*/request.json")):
                if json.loads(req.read_text()).get("params_digest") != params:
                    problems.append(f"{d.name}: interpretation {req.parent.name} refers to other parameters")
    for dsd in sorted((exp.root / "custom_datasets").glob("*")):
        man_path = dsd / "manifest.json"
        if not man_path.exists():
            problems.append(f"dataset {dsd.name}: manifest missing")
            continue
        man = json.loads(man_path.read_text())
        if dataset_digest(man, (dsd / "values.bin").read_bytes()) != man.get("digest"):
            problems.append(f"dataset {dsd.name}: digest mismatch")
    return problems
