"""Feature attribution for trained models and importance aggregation.

Attribution scores live in the model's (scaled) input space and have the
shape of one input window, (L_in, c_in).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .plots import heatmap_svg
from .errors import EmptyResults, IOFailure, KTooLarge, NonFiniteGradient, OutOfRange, ShapeMismatch
from .tensorcore import Tensor

METHODS = ("integrated_gradients", "grad_x_input", "occlusion")


@dataclass
class SelectionSpec:
    mode: str = "random"
    k: int = 5
    split: str = "val"
    seed: int = 0
    indices: list | None = None

    def __post_init__(self):
        if self.mode not in ("random", "best", "worst", "explicit"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.mode == "explicit":
            if not self.indices:
                raise ValueError("explicit selection needs indices")
        elif self.k < 1:
            raise ValueError("k must be >= 1")


def select_points(losses, spec: SelectionSpec) -> list:
    """Positions (0-based, into ``losses``) chosen by ``spec``.

    best/worst sort stably by loss, so ties go to the earlier point.
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.size
    if spec.mode == "explicit":
        idx = [int(i) for i in spec.indices]
        bad = [i for i in idx if not 0 <= i < n]
        if bad:
            raise OutOfRange(f"explicit indices {bad} outside split of {n} points")
        return idx
    if spec.k > n:
        raise KTooLarge(f"requested {spec.k} points from a split of {n}")
    if spec.mode == "best":
        return np.argsort(losses, kind="stable")[: spec.k].tolist()
    if spec.mode == "worst":
        return np.argsort(-losses, kind="stable")[: spec.k].tolist()
    rng = np.random.default_rng(spec.seed)
    return sorted(rng.choice(n, size=spec.k, replace=False).tolist())


# --- target functions -------------------------------------------------------

def target_function(model, target):
    """Scalar-per-sample function F(x_batch) -> (batch,) for attribution.

    ``target`` is (row, column) of a regression output or a class index
    (logit, pre-softmax). Stateful models run without carrying state.
    """
    kw = {"carry_state": False} if getattr(model, "stateful_capable", False) else {}
    if isinstance(target, (tuple, list)):
        r, c = int(target[0]), int(target[1])
        rows, cols = model.output_shape
        if not (0 <= r < rows and 0 <= c < cols):
            raise OutOfRange(f"target cell {(r, c)} outside output shape {model.output_shape}")

        def fn(x):
            return model(x, **kw)[:, r, c]
    else:
        k = int(target)
        if not 0 <= k < model.output_shape[1]:
            raise OutOfRange(f"class {k} outside {model.output_shape[1]} classes")

        def fn(x):
            return model(x, **kw)[:, 0, k]

    return fn


def _evaluate(fn, xs) -> np.ndarray:
    with tc.no_grad():
        return np.asarray(fn(Tensor(xs)).data, dtype=np.float64)


def _gradients(fn, xs) -> np.ndarray:
    """d F / d x for every sample of the batch ``xs`` (samples are independent)."""
    leaf = Tensor(xs, requires_grad=True)
    out = tc.sum(fn(leaf))
    tc.backward(out)
    g = leaf.grad
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("attribution gradient is not finite")
    return g


def integrated_gradients(fn, x, baseline=None, steps=64, batch_size=256):
    """Integrated gradients with the midpoint rule.

    A_i = (x_i - x'_i) / m * sum_s dF/dx_i(x' + (s - 1/2)/m (x - x')).
    Returns (attributions, F(x), F(x')).
    """
    x = np.asarray(x, dtype=np.float64)
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if base.shape != x.shape:
        raise ShapeMismatch(f"baseline {base.shape} does not match input {x.shape}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    alphas = (np.arange(steps) + 0.5) / steps
    diff = x - base
    total = np.zeros_like(x)
    for i in range(0, steps, batch_size):
        a = alphas[i:i + batch_size]
        path = base[None] + a[:, None, None] * diff[None]
        total += _gradients(fn, path).sum(axis=0)
    attr = diff * total / steps
    ends = _evaluate(fn, np.stack([x, base]))
    return attr, float(ends[0]), float(ends[1])


def grad_x_input(fn, x):
    x = np.asarray(x, dtype=np.float64)
    g = _gradients(fn, x[None])[0]
    return x * g, float(_evaluate(fn, x[None])[0])


def occlusion(fn, x, baseline=None, patch=(1, 1)):
    """F(x) - F(x with a patch set to the baseline), tiled over the window.

    Patches do not overlap; each cell receives the score of its patch.
    """
    x = np.asarray(x, dtype=np.float64)
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if base.shape != x.shape:
        raise ShapeMismatch(f"baseline {base.shape} does not match input {x.shape}")
    pr, pc = int(patch[0]), int(patch[1])
    if pr < 1 or pc < 1:
        raise ValueError("patch spans must be >= 1")
    L, C = x.shape
    cells = [(r, c) for r in range(0, L, pr) for c in range(0, C, pc)]
    batch = np.repeat(x[None], len(cells) + 1, axis=0)
    for i, (r, c) in enumerate(cells, start=1):
        batch[i, r:r + pr, c:c + pc] = base[r:r + pr, c:c + pc]
    out = _evaluate(fn, batch)
    attr = np.zeros_like(x)
    for i, (r, c) in enumerate(cells, start=1):
        attr[r:r + pr, c:c + pc] = out[0] - out[i]
    return attr, float(out[0])


# --- results ------------------------------------------------------------------

@dataclass
class PointAttribution:
    point: int
    matrix: np.ndarray
    output: float
    baseline_output: float | None = None
    completeness_gap: float | None = None
    raw_input: np.ndarray | None = None

    def to_dict(self):
        return {
            "point": int(self.point),
            "output": self.output,
            "baseline_output": self.baseline_output,
            "completeness_gap": self.completeness_gap,
        }


@dataclass
class AttributionResult:
    method: str
    target: object
    baseline: str
    points: list = field(default_factory=list)


def attribute(model, inputs, points, method="integrated_gradients", target=(0, 0),
              baseline=None, baseline_name="zero", steps=64, patch=(1, 1), raw_inputs=None):
    """Attribution for each window in ``inputs`` (N, L_in, c_in).

    ``target="predicted"`` attributes each point's predicted-class logit.
    """
    if method not in METHODS:
        raise ValueError(f"unknown attribution method {method!r}; choose from {METHODS}")
    per_point = target == "predicted"
    fn = None if per_point else target_function(model, target)
    result = AttributionResult(method, target, baseline_name)
    for i, (t, x) in enumerate(zip(points, inputs)):
        raw = None if raw_inputs is None else raw_inputs[i]
        if per_point:
            kw = {"carry_state": False} if getattr(model, "stateful_capable", False) else {}
            logits = _evaluate(lambda z: model(z, **kw)[:, 0, :], x[None])
            fn = target_function(model, int(np.argmax(logits[0])))
        if method == "integrated_gradients":
            A, fx, fb = integrated_gradients(fn, x, baseline, steps)
            gap = abs(float(A.sum()) - (fx - fb))
            result.points.append(PointAttribution(t, A, fx, fb, gap, raw))
        elif method == "grad_x_input":
            A, fx = grad_x_input(fn, x)
            result.points.append(PointAttribution(t, A, fx, raw_input=raw))
        else:
            A, fx = occlusion(fn, x, baseline, patch)
            result.points.append(PointAttribution(t, A, fx, raw_input=raw))
    return result


@dataclass
class Importance:
    matrix: np.ndarray
    per_component: np.ndarray
    per_delay: np.ndarray


def aggregate_importance(results) -> Importance:
    """Mean absolute attribution per cell over points, with row/column marginals.

    Accepts AttributionResult objects, PointAttribution objects or bare matrices.
    """
    mats = []
    for r in results:
        if isinstance(r, AttributionResult):
            mats.extend(p.matrix for p in r.points)
        elif isinstance(r, PointAttribution):
            mats.append(r.matrix)
        else:
            mats.append(np.asarray(r, dtype=np.float64))
    if not mats:
        raise EmptyResults("no attributions to aggregate")
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ShapeMismatch(f"attribution shapes differ: {sorted(shapes)}")
    imp = np.mean(np.abs(np.stack(mats)), axis=0)
    return Importance(imp, imp.mean(axis=0), imp.mean(axis=1))


# --- rendering ----------------------------------------------------------------

def matrix_csv(matrix, row_labels, col_labels) -> str:
    lines = [",".join(["delay"] + [str(c) for c in col_labels])]
    for lab, row in zip(row_labels, np.asarray(matrix, dtype=np.float64)):
        lines.append(",".join([str(lab)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def read_matrix_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows, labels = [], []
        for line in fh:
            parts = line.strip().split(",")
            labels.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return np.array(rows), labels, header[1:]


def render_attribution(matrix, stem, delays, components, title="", signed=True):
    """Write ``<stem>.svg`` (heatmap) and ``<stem>.csv``; returns both paths.

    ``delays`` label rows and ``components`` label columns.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (len(delays), len(components)):
        raise ShapeMismatch(f"matrix {m.shape} vs labels {(len(delays), len(components))}")
    stem = Path(stem)
    rows = [f"t{d:+d}" if d else "t" for d in delays]
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        svg, csv = stem.with_suffix(".svg"), stem.with_suffix(".csv")
        svg.write_text(heatmap_svg(m, rows, list(components), title, signed))
        csv.write_text(matrix_csv(m, list(delays), list(components)))
    except OSError as exc:
        raise IOFailure(f"cannot write {stem}: {exc}") from exc
    return svg, csv
