"""Timestamped datasets, prediction points and fixed-window sample construction.

Rows are addressed by a global 0-based index into the concatenation of all
slices. A prediction point is such an index; its input window covers rows
t+a .. t+b and its output window rows t+c .. t+d, never crossing the slice
that contains t.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptyTask,
    InvalidTask,
    ImportFailure,
    MissingComponent,
    NonMonotonicTimestamps,
    NonNumericValue,
    OffGridTimestamp,
    OutOfRange,
    UnknownSplit,
)

ROLES = ("input", "output", "both")
EDGE_POLICIES = ("drop", "pad_zero", "pad_edge")


@dataclass(frozen=True)
class Component:
    name: str
    role: str = "both"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"component role must be one of {ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class Slice:
    start_ts: int
    values: np.ndarray
    synthetic: np.ndarray = None  # bool per row, True where interpolated

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("slice values must be a non-empty 2-D matrix")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        synth = (
            np.zeros(values.shape[0], dtype=bool)
            if self.synthetic is None
            else np.array(self.synthetic, dtype=bool)
        )
        if synth.shape != (values.shape[0],):
            raise ValueError("synthetic mask must have one entry per row")
        synth.setflags(write=False)
        object.__setattr__(self, "synthetic", synth)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def end_ts(self, delta) -> int:
        return self.start_ts + (self.length - 1) * delta


@dataclass(frozen=True)
class TimeSeriesDataset:
    name: str
    components: tuple
    delta: int
    slices: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "slices", tuple(self.slices))
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        ncomp = len(self.components)
        prev_end = None
        for s in self.slices:
            if s.values.shape[1] != ncomp:
                raise ValueError("slice column count does not match component count")
            if prev_end is not None and s.start_ts <= prev_end:
                raise ValueError("slices must be disjoint and chronologically ordered")
            prev_end = s.end_ts(self.delta)

    @property
    def n_total(self) -> int:
        return int(sum(s.length for s in self.slices))

    @property
    def component_names(self) -> list:
        return [c.name for c in self.components]

    @cached_property
    def offsets(self) -> np.ndarray:
        """Global index of each slice's first row, plus the total at the end."""
        return np.concatenate([[0], np.cumsum([s.length for s in self.slices])]).astype(int)

    @cached_property
    def values(self) -> np.ndarray:
        out = np.concatenate([s.values for s in self.slices], axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.concatenate(
            [s.start_ts + self.delta * np.arange(s.length, dtype=np.int64) for s in self.slices]
        )

    @cached_property
    def synthetic(self) -> np.ndarray:
        return np.concatenate([s.synthetic for s in self.slices])

    def column(self, name) -> int:
        try:
            return self.component_names.index(name)
        except ValueError:
            raise MissingComponent(f"unknown component {name!r}") from None

    def slice_of(self, t: int) -> int:
        offsets = self.offsets
        if not 0 <= t < offsets[-1]:
            raise OutOfRange(f"row {t} outside dataset of {offsets[-1]} rows")
        return int(np.searchsorted(offsets, t, side="right") - 1)


# --- import -----------------------------------------------------------------

def parse_timestamp(text) -> int:
    """ISO-8601 (naive taken as UTC) or integer epoch seconds to epoch seconds."""
    text = str(text).strip()
    if text.lstrip("-").isdigit():
        return int(text)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp()))


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def import_dataset(timestamps, table, meta) -> TimeSeriesDataset:
    """Build a dataset from epoch-second stamps and a column table.

    ``table`` maps component name to a sequence of values; ``meta`` holds
    ``name``, ``delta_seconds`` and ``components`` ([{name, role}]). A step
    larger than delta starts a new slice.
    """
    delta = int(meta["delta_seconds"])
    if delta <= 0:
        raise ValueError("delta_seconds must be positive")
    comps = [
        Component(c["name"], c.get("role", "both")) if isinstance(c, dict) else Component(c)
        for c in meta["components"]
    ]
    ts = np.asarray(timestamps, dtype=np.int64)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("need at least one timestamp")
    cols = []
    for c in comps:
        if c.name not in table:
            raise MissingComponent(f"component {c.name!r} not present in table")
        col = list(table[c.name])
        if len(col) != ts.size:
            raise MissingComponent(f"component {c.name!r} has {len(col)} values for {ts.size} stamps")
        try:
            arr = np.array([float(v) for v in col], dtype=np.float64)
        except (TypeError, ValueError):
            bad = next(i for i, v in enumerate(col) if not _is_number(v))
            raise NonNumericValue(f"row {bad}: component {c.name!r} value {col[bad]!r}") from None
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise NonNumericValue(f"row {bad}: component {c.name!r} is not finite")
        cols.append(arr)
    values = np.column_stack(cols) if cols else np.zeros((ts.size, 0))

    steps = np.diff(ts)
    if np.any(steps <= 0):
        bad = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise NonMonotonicTimestamps(f"row {bad}: timestamp {ts[bad]} does not increase")
    if np.any(steps % delta):
        bad = int(np.flatnonzero(steps % delta)[0]) + 1
        raise OffGridTimestamp(
            f"row {bad}: timestamp {ts[bad]} is not a multiple of {delta}s from slice start"
        )
    cuts = np.flatnonzero(steps > delta) + 1
    bounds = np.concatenate([[0], cuts, [ts.size]])
    slices = [
        Slice(int(ts[lo]), values[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    return TimeSeriesDataset(meta["name"], comps, delta, slices)


def _is_number(v) -> bool:
    try:
        float(v)
        return True
    except (TypeError, ValueError):
        return False


def read_csv_dataset(csv_path, meta_path) -> TimeSeriesDataset:
    meta = json.loads(Path(meta_path).read_text())
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "timestamp":
            raise MissingComponent("first CSV column must be 'timestamp'")
        rows = list(reader)
    stamps = []
    for i, row in enumerate(rows):
        try:
            stamps.append(parse_timestamp(row[0]))
        except (ValueError, IndexError):
            raise ImportFailure(f"row {i}: unparseable timestamp {row[:1]!r}") from None
    table = {name: [r[j] if j < len(r) else "" for r in rows] for j, name in enumerate(header) if j}
    return import_dataset(stamps, table, meta)


def write_csv_dataset(ds: TimeSeriesDataset, csv_path, meta_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + ds.component_names)
        for ts, row in zip(ds.timestamps, ds.values):
            w.writerow([format_timestamp(ts)] + [repr(float(v)) for v in row])
    meta = {
        "name": ds.name,
        "delta_seconds": ds.delta,
        "components": [{"name": c.name, "role": c.role} for c in ds.components],
    }
    Path(meta_path).write_text(json.dumps(meta, indent=2) + "\n")


def interpolate_gaps(ds: TimeSeriesDataset, max_gap: int, method: str = "linear") -> TimeSeriesDataset:
    """Merge neighbouring slices separated by at most ``max_gap`` missing steps."""
    if max_gap < 1:
        raise ValueError("max_gap must be >= 1")
    if method not in ("linear", "hold"):
        raise ValueError(f"unknown interpolation method {method!r}")
    merged = [ds.slices[0]]
    for nxt in ds.slices[1:]:
        cur = merged[-1]
        missing = (nxt.start_ts - cur.end_ts(ds.delta)) // ds.delta - 1
        if missing > max_gap:
            merged.append(nxt)
            continue
        left, right = cur.values[-1], nxt.values[0]
        if method == "linear":
            frac = np.arange(1, missing + 1)[:, None] / (missing + 1)
            fill = left + frac * (right - left)
        else:
            fill = np.repeat(left[None], missing, axis=0)
        merged[-1] = Slice(
            cur.start_ts,
            np.vstack([cur.values, fill, nxt.values]),
            np.concatenate([cur.synthetic, np.ones(missing, bool), nxt.synthetic]),
        )
    return TimeSeriesDataset(ds.name, ds.components, ds.delta, merged)


# --- tasks ------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    in_delays: tuple
    in_components: tuple
    out_delays: tuple
    out_components: tuple
    kind: str = "regression"
    n_classes: int | None = None
    edge_policy: str = "drop"

    def __post_init__(self):
        for f in ("in_delays", "out_delays", "in_components", "out_components"):
            object.__setattr__(self, f, tuple(getattr(self, f)))
        a, b = self.in_delays
        c, d = self.out_delays
        if a > b or c > d:
            raise InvalidTask(f"delay intervals need a <= b and c <= d, got [{a},{b}] [{c},{d}]")
        if not self.in_components or not self.out_components:
            raise InvalidTask("input and output component selections must be non-empty")
        if self.kind not in ("regression", "classification"):
            raise InvalidTask(f"unknown task kind {self.kind!r}")
        if self.kind == "classification":
            if not self.n_classes or self.n_classes < 2:
                raise InvalidTask("classification needs n_classes >= 2")
            if len(self.out_components) != 1:
                raise InvalidTask("classification needs exactly one label component")
        if self.edge_policy not in EDGE_POLICIES:
            raise InvalidTask(f"edge_policy must be one of {EDGE_POLICIES}")

    @property
    def l_in(self) -> int:
        return self.in_delays[1] - self.in_delays[0] + 1

    @property
    def l_out(self) -> int:
        return self.out_delays[1] - self.out_delays[0] + 1

    @property
    def c_in(self) -> int:
        return len(self.in_components)

    @property
    def c_out(self) -> int:
        return len(self.out_components)

    @property
    def input_shape(self) -> tuple:
        return (self.l_in, self.c_in)

    @property
    def output_shape(self) -> tuple:
        if self.kind == "classification":
            return (1, self.n_classes)
        return (self.l_out, self.c_out)

    @property
    def reach(self) -> tuple:
        """Smallest and largest delay touched by either window."""
        return min(self.in_delays[0], self.out_delays[0]), max(self.in_delays[1], self.out_delays[1])

    def to_dict(self) -> dict:
        return {
            "in_delays": list(self.in_delays),
            "in_components": list(self.in_components),
            "out_delays": list(self.out_delays),
            "out_components": list(self.out_components),
            "kind": self.kind,
            "n_classes": self.n_classes,
            "edge_policy": self.edge_policy,
        }

    @classmethod
    def from_dict(cls, d) -> "TaskSpec":
        return cls(
            tuple(d["in_delays"]),
            tuple(d["in_components"]),
            tuple(d["out_delays"]),
            tuple(d["out_components"]),
            d.get("kind", "regression"),
            d.get("n_classes"),
            d.get("edge_policy", "drop"),
        )


def is_single_step(task: TaskSpec) -> bool:
    return task.out_delays[0] == task.out_delays[1]


def is_univariate(task: TaskSpec) -> bool:
    return task.c_out == 1


def is_causal(task: TaskSpec) -> bool:
    """Inputs strictly precede outputs relative to the prediction point."""
    return task.in_delays[1] < task.out_delays[0]


def is_autoregressive(task: TaskSpec) -> bool:
    return set(task.out_components) <= set(task.in_components) and is_causal(task)


# --- prediction points and windows -------------------------------------------

def enumerate_prediction_points(ds: TimeSeriesDataset, task: TaskSpec, stride: int = 1, limit=None) -> list:
    """Valid prediction points in chronological order.

    Under ``drop`` every row the two windows touch must lie in t's slice; pad
    policies admit every row. ``stride``/``limit`` thin the result.
    """
    for names, allowed in ((task.in_components, ("input", "both")), (task.out_components, ("output", "both"))):
        for name in names:
            role = ds.components[ds.column(name)].role
            if role not in allowed:
                raise InvalidTask(f"component {name!r} has role {role!r}")
    lo, hi = task.reach
    offsets = ds.offsets
    points = []
    for s, (start, end) in enumerate(zip(offsets[:-1], offsets[1:])):
        if task.edge_policy == "drop":
            first, last = start - lo, end - 1 - hi
        else:
            first, last = start, end - 1
        first, last = max(first, start), min(last, end - 1)
        points.extend(range(int(first), int(last) + 1))
    if not points:
        raise EmptyTask("no valid prediction points for this task")
    points = points[:: max(int(stride), 1)]
    if limit is not None:
        points = points[: int(limit)]
    return points


@dataclass
class WindowPair:
    t: int
    X: np.ndarray
    Y: np.ndarray
    padded_rows: frozenset = frozenset()
    padded_out_rows: frozenset = frozenset()


def _gather(values, t, lo, hi, start, end, policy):
    """Rows t+lo..t+hi from ``values`` with out-of-slice rows synthesized."""
    idx = np.arange(t + lo, t + hi + 1)
    outside = (idx < start) | (idx >= end)
    if outside.any() and policy == "drop":
        raise OutOfRange(f"prediction point {t} needs rows outside its slice")
    clipped = np.clip(idx, start, end - 1)
    block = values[clipped].copy()
    if policy == "pad_zero":
        block[outside] = 0.0
    return block, frozenset(np.flatnonzero(outside).tolist())


def build_window_pair(ds: TimeSeriesDataset, t: int, task: TaskSpec, scaler=None) -> WindowPair:
    """Input/output matrices for prediction point ``t``.

    Scaling happens before padding, so ``pad_zero`` rows are zero in the
    scaled space when a scaler is given.
    """
    values = ds.values if scaler is None else scaler.apply_dataset(ds)
    return _window(ds, values, ds.values, ds.offsets, t, task)


def _window(ds, values, raw, offsets, t, task):
    if not 0 <= t < offsets[-1]:
        raise OutOfRange(f"row {t} outside dataset of {offsets[-1]} rows")
    s = int(np.searchsorted(offsets, t, side="right") - 1)
    start, end = offsets[s], offsets[s + 1]
    in_cols = [ds.column(n) for n in task.in_components]
    out_cols = [ds.column(n) for n in task.out_components]
    X, padded = _gather(values[:, in_cols], t, *task.in_delays, start, end, task.edge_policy)
    if task.kind == "classification":
        c = task.out_delays[0]
        lab, pad_out = _gather(raw[:, out_cols], t, c, c, start, end, task.edge_policy)
        Y = np.zeros((1, task.n_classes))
        if not pad_out or task.edge_policy == "pad_edge":
            label = lab[0, 0]
            k = int(label)
            if k != label or not 0 <= k < task.n_classes:
                raise InvalidTask(f"row {t + c}: label {label!r} is not a class index")
            Y[0, k] = 1.0
    else:
        Y, pad_out = _gather(values[:, out_cols], t, *task.out_delays, start, end, task.edge_policy)
    return WindowPair(t, X, Y, padded, pad_out)


def build_windows(ds: TimeSeriesDataset, points, task: TaskSpec, scaler=None):
    """Stacked (N, L_in, c_in) inputs and (N, L_out, c_out) or (N, 1, K) targets."""
    points = list(points)
    values = ds.values if scaler is None else scaler.apply_dataset(ds)
    if task.edge_policy != "drop" or task.kind == "classification":
        raw, offsets = ds.values, ds.offsets
        pairs = [_window(ds, values, raw, offsets, t, task) for t in points]
        return np.stack([p.X for p in pairs]), np.stack([p.Y for p in pairs])
    in_cols = [ds.column(n) for n in task.in_components]
    out_cols = [ds.column(n) for n in task.out_components]
    pts = np.asarray(points, dtype=int)
    a, b = task.in_delays
    c, d = task.out_delays
    xi = pts[:, None] + np.arange(a, b + 1)[None, :]
    yi = pts[:, None] + np.arange(c, d + 1)[None, :]
    return values[:, in_cols][xi], values[:, out_cols][yi]


# --- splitting --------------------------------------------------------------

@dataclass
class SplitAssignment:
    train: list
    val: list
    eval: list
    fractions: tuple

    def __getitem__(self, name):
        if name not in ("train", "val", "eval"):
            raise UnknownSplit(f"unknown split {name!r}; valid splits: train, val, eval")
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {"train": list(map(int, self.train)), "val": list(map(int, self.val)),
                "eval": list(map(int, self.eval)), "fractions": list(self.fractions)}


def split_points(points, fractions, mode="chronological", ds: TimeSeriesDataset = None) -> SplitAssignment:
    """Partition chronologically ordered points into train/val/eval.

    ``by_slice`` needs the dataset to know slice membership and hands whole
    slices to each split in turn until its point budget is met.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(math.fsum(fr) - 1.0) > 1e-9:
        raise DegenerateSplit(f"fractions must be three non-negative values summing to 1, got {fr}")
    points = list(points)
    n = len(points)
    if mode == "chronological":
        n_train = int(math.floor(fr[0] * n + 1e-9))
        n_val = int(math.floor(fr[1] * n + 1e-9))
        parts = [points[:n_train], points[n_train:n_train + n_val], points[n_train + n_val:]]
    elif mode == "by_slice":
        if ds is None:
            raise ValueError("by_slice splitting needs the dataset")
        groups = {}
        for t in points:
            groups.setdefault(ds.slice_of(t), []).append(t)
        budgets = [f * n for f in fr]
        active = [i for i in range(3) if fr[i] > 0]
        parts = [[], [], []]
        k = 0
        for s in sorted(groups):
            target = active[k]
            parts[target].extend(groups[s])
            if k < len(active) - 1 and len(parts[target]) >= budgets[target] - 1e-9:
                k += 1
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    for name, f, part in zip(("train", "val", "eval"), fr, parts):
        if f > 0 and not part:
            raise DegenerateSplit(f"{name} split requested fraction {f} but received no points")
    return SplitAssignment(parts[0], parts[1], parts[2], fr)


# --- scaling ----------------------------------------------------------------

@dataclass
class ScalerParams:
    components: tuple
    mean: np.ndarray
    std: np.ndarray
    flagged: tuple = ()
    scaled: tuple = ()  # component names actually transformed

    def apply(self, matrix, columns=None):
        """Z-score ``matrix`` whose columns are the named components."""
        m, s = self._params(columns)
        return (np.asarray(matrix, dtype=np.float64) - m) / s

    def invert(self, matrix, columns=None):
        m, s = self._params(columns)
        return np.asarray(matrix, dtype=np.float64) * s + m

    def _params(self, columns):
        names = self.components if columns is None else columns
        idx = [self.components.index(n) for n in names]
        on = np.array([n in self.scaled for n in names])
        m = np.where(on, self.mean[idx], 0.0)
        s = np.where(on, self.std[idx], 1.0)
        return m, s

    def apply_dataset(self, ds: TimeSeriesDataset) -> np.ndarray:
        return self.apply(ds.values, ds.component_names)

    def to_dict(self) -> dict:
        return {
            "components": list(self.components),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "flagged": list(self.flagged),
            "scaled": list(self.scaled),
        }

    @classmethod
    def from_dict(cls, d) -> "ScalerParams":
        return cls(tuple(d["components"]), np.array(d["mean"], dtype=np.float64),
                   np.array(d["std"], dtype=np.float64), tuple(d["flagged"]), tuple(d["scaled"]))


def identity_scaler(ds: TimeSeriesDataset) -> ScalerParams:
    n = len(ds.components)
    return ScalerParams(tuple(ds.component_names), np.zeros(n), np.ones(n), (), ())


def scaler_rows(ds: TimeSeriesDataset, task: TaskSpec, points) -> dict:
    """Per component, the sorted unique in-slice rows touched by the windows of ``points``."""
    offsets = ds.offsets
    rows = {}
    for delays, names in ((task.in_delays, task.in_components), (task.out_delays, task.out_components)):
        touched = set()
        for t in points:
            s = int(np.searchsorted(offsets, t, side="right") - 1)
            lo = max(t + delays[0], offsets[s])
            hi = min(t + delays[1], offsets[s + 1] - 1)
            touched.update(range(lo, hi + 1))
        for n in names:
            rows.setdefault(n, set()).update(touched)
    return {n: np.array(sorted(r), dtype=int) for n, r in rows.items()}


def fit_scaler(ds: TimeSeriesDataset, task: TaskSpec, train_points,
               scale_inputs=True, scale_outputs=True) -> ScalerParams:
    """Train-split z-score statistics (population std) per component.

    Zero-variance components get std 1 and are listed in ``flagged``.
    Classification labels are never scaled.
    """
    names = ds.component_names
    values = ds.values
    rows = scaler_rows(ds, task, train_points)
    scaled = set()
    if scale_inputs:
        scaled.update(task.in_components)
    if scale_outputs and task.kind == "regression":
        scaled.update(task.out_components)
    if task.kind == "classification":
        scaled -= set(task.out_components)
    mean = np.zeros(len(names))
    std = np.ones(len(names))
    flagged = []
    for i, n in enumerate(names):
        if n not in scaled or n not in rows or rows[n].size == 0:
            continue
        col = values[rows[n], i]
        mean[i] = col.mean()
        sd = col.std()
        if sd <= 1e-12 * max(1.0, abs(mean[i])):
            flagged.append(n)
            warnings.warn(f"component {n!r} has zero variance on the train split; std set to 1")
            sd = 1.0
        std[i] = sd
    return ScalerParams(tuple(names), mean, std, tuple(flagged),
                        tuple(n for n in names if n in scaled))


# --- supervised bundle ------------------------------------------------------

@dataclass
class SupervisedData:
    """Everything training and interpretation need, computed once."""

    dataset: TimeSeriesDataset
    task: TaskSpec
    points: list
    split: SplitAssignment
    scaler: ScalerParams
    X: np.ndarray  # scaled inputs, one row per point
    Y: np.ndarray  # scaled regression targets or one-hot labels
    Y_raw: np.ndarray
    position: dict = field(default_factory=dict)  # point -> row in X/Y

    def rows(self, points) -> np.ndarray:
        try:
            return np.array([self.position[int(t)] for t in points], dtype=int)
        except KeyError as exc:
            raise OutOfRange(f"prediction point {exc.args[0]} is not part of this data") from None

    def slice_ids(self, points) -> np.ndarray:
        offsets = self.dataset.offsets
        return np.searchsorted(offsets, np.asarray(points, dtype=int), side="right") - 1


def prepare(ds: TimeSeriesDataset, task: TaskSpec, fractions=(0.7, 0.15, 0.15),
            mode="chronological", stride=1, limit=None, scale=True) -> SupervisedData:
    points = enumerate_prediction_points(ds, task, stride, limit)
    split = split_points(points, fractions, mode, ds)
    scaler = fit_scaler(ds, task, split.train) if scale else identity_scaler(ds)
    X, Y = build_windows(ds, points, task, scaler)
    _, Y_raw = build_windows(ds, points, task, None)
    return SupervisedData(ds, task, points, split, scaler, X, Y, Y_raw,
                          {int(t): i for i, t in enumerate(points)})


def supervised_from_split(ds, task, split: SplitAssignment, scaler: ScalerParams) -> SupervisedData:
    points = sorted(split.train + split.val + split.eval)
    X, Y = build_windows(ds, points, task, scaler)
    _, Y_raw = build_windows(ds, points, task, None)
    return SupervisedData(ds, task, points, split, scaler, X, Y, Y_raw,
                          {int(t): i for i, t in enumerate(points)})


def describe(ds: TimeSeriesDataset) -> str:
    lengths = [s.length for s in ds.slices]
    return (f"{ds.name}: {ds.n_total} rows, {len(lengths)} slices (lengths {lengths[:10]}"
            f"{'...' if len(lengths) > 10 else ''}), delta {ds.delta}s, components "
            + ", ".join(f"{c.name}[{c.role}]" for c in ds.components))
