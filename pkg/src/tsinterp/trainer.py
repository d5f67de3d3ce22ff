"""Mini-batch training, evaluation, prediction and hyperparameter sweeps."""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .architectures import ArchSpec, Model, build_model
from .errors import ConfigError, EmptyTrainSplit, NonFiniteLoss, UnknownSplit
from .tensorcore import Tensor
from .timebase import ScalerParams, SplitAssignment, SupervisedData, TaskSpec

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "eval")


@dataclass
class TrainConfig:
    loss: str = "mse"
    optimizer: str = "adam"
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.0
    momentum: float = 0.0
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    stateful: bool = False
    shuffle: bool = True
    keep_last: bool = False

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.loss not in ("mse", "mae", "cross_entropy"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size and max_epochs must be >= 1, patience >= 0")
        if self.stateful and self.shuffle:
            raise ConfigError("stateful training requires shuffle = false")

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown train config keys: {sorted(extra)}")
        return cls(**d)


# --- optimizers -------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr, self.betas, self.eps, self.wd = lr, betas, eps, weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad + self.wd * p.data if self.wd else p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, params, lr=1e-2, momentum=0.0, weight_decay=0.0):
        self.params = list(params)
        self.lr, self.momentum, self.wd = lr, momentum, weight_decay
        self.buf = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, b in zip(self.params, self.buf):
            if p.grad is None:
                continue
            g = p.grad + self.wd * p.data if self.wd else p.grad
            b *= self.momentum
            b += g
            p.data = p.data - self.lr * b


def make_optimizer(model: Model, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(model.parameters(), cfg.lr, cfg.betas, weight_decay=cfg.weight_decay)
    return SGD(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay)


# --- losses -----------------------------------------------------------------

def loss_tensor(kind, pred: Tensor, target) -> Tensor:
    target = tc.as_tensor(target)
    if kind == "mse":
        diff = pred - target
        return tc.mean(diff * diff)
    if kind == "mae":
        return tc.mean(tc.absolute(pred - target))
    logp = tc.log_softmax_rows(pred)
    return tc.scale(tc.sum(logp * target), -1.0 / pred.shape[0])


def per_point_loss(kind, pred, target) -> np.ndarray:
    pred, target = np.asarray(pred), np.asarray(target)
    axes = tuple(range(1, pred.ndim))
    if kind == "mse":
        return ((pred - target) ** 2).mean(axis=axes)
    if kind == "mae":
        return np.abs(pred - target).mean(axis=axes)
    z = pred - pred.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return -(logp * target).sum(axis=axes)


# --- batching ---------------------------------------------------------------

@dataclass
class Batch:
    points: list
    slice_id: int = -1
    reset: bool = True  # stateful: start of a new slice run


def make_batches(points, cfg: TrainConfig, slice_ids=None, epoch=0) -> list:
    """Split ``points`` into batches.

    Stateful: consecutive chronological runs within each slice, ``reset``
    marking the first batch of every slice. Otherwise a seeded shuffle.
    """
    points = list(points)
    bs = cfg.batch_size
    if cfg.stateful:
        if slice_ids is None:
            slice_ids = [0] * len(points)
        batches = []
        for sid, group in itertools.groupby(zip(points, slice_ids), key=lambda p: p[1]):
            run = [p for p, _ in group]
            for i in range(0, len(run), bs):
                batches.append(Batch(run[i:i + bs], int(sid), i == 0))
        return batches
    order = np.arange(len(points))
    if cfg.shuffle:
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(points))
    shuffled = [points[i] for i in order]
    return [Batch(shuffled[i:i + bs]) for i in range(0, len(shuffled), bs)]


def _prepare_carry(model: Model, batch: Batch):
    """Reset at slice starts, otherwise detach (truncated backprop) and fit lanes."""
    if batch.reset:
        model.reset_state()
        return False
    model.detach_state()
    if model.state is not None and model.state[0][0].shape[0] > len(batch.points):
        model.trim_state(len(batch.points))
    return model.state is not None


# --- checkpoints ------------------------------------------------------------

def digest(obj) -> str:
    if isinstance(obj, (bytes, bytearray)):
        data = bytes(obj)
    else:
        data = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(data).hexdigest()


@dataclass
class Checkpoint:
    arch: ArchSpec
    task: TaskSpec
    scaler: ScalerParams
    split: SplitAssignment
    params: dict
    curves: list
    best_epoch: int
    best_val: float
    config: TrainConfig
    seed: int
    dataset: str = ""
    dataset_digest: str = ""
    last_params: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def digests(self):
        return {
            "task": digest(self.task.to_dict()),
            "scaler": digest(self.scaler.to_dict()),
            "split": digest(self.split.to_dict()),
            "config": digest(self.config.to_dict()),
            "dataset": self.dataset_digest,
        }

    def restore_model(self, last=False) -> Model:
        model = build_model(self.arch, self.task, self.seed)
        model.load_state_dict(self.last_params if last and self.last_params else self.params)
        return model.eval()

    def manifest(self):
        return {
            "arch": self.arch.to_dict(),
            "task": self.task.to_dict(),
            "scaler": self.scaler.to_dict(),
            "split": self.split.to_dict(),
            "curves": self.curves,
            "best_epoch": self.best_epoch,
            "best_val": self.best_val,
            "config": self.config.to_dict(),
            "seed": self.seed,
            "dataset": self.dataset,
            "digests": self.digests,
            "extra": self.extra,
        }

    def save(self, directory) -> Path:
        """Write ``manifest.json`` plus flat little-endian float64 parameter files."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        man = self.manifest()
        man["params"] = _write_params(d / "params.bin", self.params)
        if self.last_params is not None:
            man["last_params"] = _write_params(d / "last_params.bin", self.last_params)
        man["params_digest"] = digest((d / "params.bin").read_bytes())
        (d / "manifest.json").write_text(json.dumps(man, indent=1, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        params = _read_params(d / "params.bin", man["params"])
        last = _read_params(d / "last_params.bin", man["last_params"]) if "last_params" in man else None
        split = man["split"]
        return cls(
            ArchSpec.from_dict(man["arch"]),
            TaskSpec.from_dict(man["task"]),
            ScalerParams.from_dict(man["scaler"]),
            SplitAssignment(split["train"], split["val"], split["eval"], tuple(split["fractions"])),
            params,
            man["curves"],
            man["best_epoch"],
            man["best_val"],
            TrainConfig.from_dict(man["config"]),
            man["seed"],
            man.get("dataset", ""),
            man["digests"].get("dataset", ""),
            last,
            man.get("extra", {}),
        )


def _write_params(path, params):
    layout, offset = [], 0
    chunks = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.reshape(-1))
    flat = np.concatenate(chunks) if chunks else np.zeros(0, "<f8")
    Path(path).write_bytes(flat.astype("<f8").tobytes())
    return layout


def _read_params(path, layout):
    flat = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    out = {}
    for entry in layout:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        out[entry["name"]] = flat[entry["offset"]: entry["offset"] + n].reshape(entry["shape"]).astype(np.float64)
    return out


# --- forward over points ----------------------------------------------------

def forward_points(model: Model, data: SupervisedData, points, batch_size=256) -> np.ndarray:
    """Model outputs (scaled space / logits) for ``points`` without recording.

    Stateful models run chronological batches with the same carry rules as
    training, so results depend only on the point list.
    """
    points = list(points)
    if not points:
        return np.zeros((0,) + tuple(model.output_shape))
    rows = data.rows(points)
    outs = []
    with tc.no_grad():
        if model.stateful:
            cfg = TrainConfig(batch_size=batch_size, stateful=True, shuffle=False)
            pos = {t: i for i, t in enumerate(points)}
            for batch in make_batches(points, cfg, data.slice_ids(points)):
                _prepare_carry(model, batch)
                idx = rows[[pos[t] for t in batch.points]]
                outs.append(model(Tensor(data.X[idx])).data)
            model.reset_state()
        else:
            for i in range(0, len(points), batch_size):
                outs.append(model(Tensor(data.X[rows[i:i + batch_size]])).data)
    return np.concatenate(outs, axis=0)


def _split_loss(model, data, points, kind, batch_size):
    if not points:
        return float("nan")
    pred = forward_points(model, data, points, batch_size)
    return float(per_point_loss(kind, pred, data.Y[data.rows(points)]).mean())


# --- training ---------------------------------------------------------------

def train(model: Model, data: SupervisedData, cfg: TrainConfig, hooks=None, dataset_digest="") -> Checkpoint:
    """Train with early stopping on validation loss (train loss if no val split).

    ``hooks`` is an optional callable receiving ``(event, info)`` for
    ``"batch"`` and ``"epoch"`` events.
    """
    task = data.task
    if task.kind == "classification" and cfg.loss != "cross_entropy":
        raise ConfigError("classification tasks train with cross_entropy")
    if task.kind == "regression" and cfg.loss == "cross_entropy":
        raise ConfigError("cross_entropy needs a classification task")
    if cfg.stateful and not model.stateful:
        raise ConfigError(f"{model.spec.arch_name} is not configured as stateful")
    train_pts = list(data.split.train)
    if not train_pts:
        raise EmptyTrainSplit("train split has no prediction points")
    val_pts = list(data.split.val)
    monitor = val_pts if val_pts else train_pts
    opt = make_optimizer(model, cfg)
    slice_ids = data.slice_ids(train_pts)
    pos = {t: i for i, t in enumerate(train_pts)}
    train_rows = data.rows(train_pts)

    curves, best, best_epoch, best_params, stale = [], np.inf, -1, None, 0
    for epoch in range(cfg.max_epochs):
        model.train()
        total, count = 0.0, 0
        for b, batch in enumerate(make_batches(train_pts, cfg, slice_ids, epoch)):
            carried = _prepare_carry(model, batch) if cfg.stateful else False
            if hooks:
                hooks("batch", {"epoch": epoch, "batch": batch, "carried": carried})
            idx = train_rows[[pos[t] for t in batch.points]]
            pred = model(Tensor(data.X[idx]))
            loss = loss_tensor(cfg.loss, pred, data.Y[idx])
            if not np.isfinite(loss.data).all():
                raise NonFiniteLoss(f"non-finite training loss at epoch {epoch}, batch {b}")
            model.zero_grad()
            tc.backward(loss)
            opt.step()
            total += float(loss.data) * len(batch.points)
            count += len(batch.points)
        if cfg.stateful:
            model.reset_state()
        model.eval()
        train_loss = total / count
        val_loss = _split_loss(model, data, monitor, cfg.loss, max(cfg.batch_size, 256) if not cfg.stateful else cfg.batch_size)
        if not np.isfinite(val_loss):
            raise NonFiniteLoss(f"non-finite validation loss at epoch {epoch}")
        curves.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if hooks:
            hooks("epoch", curves[-1])
        log.debug("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
        if val_loss < best:
            best, best_epoch, stale = val_loss, epoch, 0
            best_params = model.state_dict()
        else:
            stale += 1
            if stale > cfg.patience:
                break
    ckpt = Checkpoint(
        arch=copy.deepcopy(model.spec),
        task=task,
        scaler=data.scaler,
        split=data.split,
        params=best_params,
        curves=curves,
        best_epoch=best_epoch,
        best_val=float(best),
        config=cfg,
        seed=model.seed,
        dataset=data.dataset.name,
        dataset_digest=dataset_digest,
        last_params=model.state_dict() if cfg.keep_last else None,
    )
    model.load_state_dict(best_params)
    return ckpt


def validation_loss(ckpt: Checkpoint, data: SupervisedData) -> float:
    """Recompute the monitored loss with restored best parameters."""
    model = ckpt.restore_model()
    pts = list(data.split.val) or list(data.split.train)
    bs = ckpt.config.batch_size if ckpt.config.stateful else max(ckpt.config.batch_size, 256)
    return _split_loss(model, data, pts, ckpt.config.loss, bs)


# --- evaluation -------------------------------------------------------------

def _split_points(ckpt_or_data, split):
    if split not in SPLITS:
        raise UnknownSplit(f"unknown split {split!r}; valid splits: {', '.join(SPLITS)}")
    return list(ckpt_or_data.split[split])


def predict(ckpt: Checkpoint, data: SupervisedData, points, model=None) -> dict:
    """Raw-unit regression predictions, or class probabilities and labels."""
    model = model or ckpt.restore_model()
    out = forward_points(model, data, points, 256 if not ckpt.config.stateful else ckpt.config.batch_size)
    task = ckpt.task
    if task.kind == "classification":
        logits = out[:, 0, :]
        z = logits - logits.max(axis=-1, keepdims=True)
        probs = np.exp(z) / np.exp(z).sum(axis=-1, keepdims=True)
        return {"logits": logits, "probs": probs, "labels": probs.argmax(axis=-1)}
    raw = ckpt.scaler.invert(out.reshape(-1, task.c_out), list(task.out_components))
    return {"scaled": out, "raw": raw.reshape(out.shape)}


def regression_metrics(pred, target, names) -> dict:
    pred, target = np.asarray(pred), np.asarray(target)
    err = pred - target
    per_point = (err ** 2).mean(axis=(1, 2))
    return {
        "mse": float((err ** 2).mean()),
        "mae": float(np.abs(err).mean()),
        "per_component": {
            n: {"mse": float((err[:, :, j] ** 2).mean()), "mae": float(np.abs(err[:, :, j]).mean())}
            for j, n in enumerate(names)
        },
        "per_point_loss": per_point.tolist(),
    }


def classification_metrics(labels, truth, n_classes, per_point=None) -> dict:
    labels, truth = np.asarray(labels, int), np.asarray(truth, int)
    conf = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(conf, (truth, labels), 1)
    f1s = []
    for k in range(n_classes):
        tp = conf[k, k]
        fp = conf[:, k].sum() - tp
        fn = conf[k, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    out = {
        "accuracy": float((labels == truth).mean()) if labels.size else float("nan"),
        "macro_f1": float(np.mean(f1s)),
        "confusion": conf.tolist(),
    }
    if per_point is not None:
        out["per_point_loss"] = np.asarray(per_point).tolist()
    return out


def evaluate(ckpt: Checkpoint, data: SupervisedData, split: str = "val", model=None) -> dict:
    points = _split_points(ckpt, split)
    task = ckpt.task
    res = predict(ckpt, data, points, model)
    rows = data.rows(points)
    base = {"split": split, "n": len(points), "points": [int(t) for t in points]}
    if task.kind == "classification":
        truth = data.Y[rows][:, 0, :].argmax(axis=-1)
        ce = per_point_loss("cross_entropy", res["logits"][:, None, :], data.Y[rows])
        return {**base, **classification_metrics(res["labels"], truth, task.n_classes, ce)}
    return {**base, **regression_metrics(res["raw"], data.Y_raw[rows], task.out_components)}


# --- sweeps -----------------------------------------------------------------

@dataclass
class SweepConfig:
    grid: dict
    selection_metric: str = "val_loss"
    consolidate: bool = True

    def __post_init__(self):
        if not self.grid or any(not isinstance(v, list) or not v for v in self.grid.values()):
            raise ConfigError("sweep grid must map names to non-empty value lists")

    def combinations(self):
        keys = list(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]


@dataclass
class SweepResult:
    trials: list
    best_index: int | None
    checkpoint: Checkpoint | None


def trial_seed(base_seed, index) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def apply_overrides(arch: ArchSpec, cfg: TrainConfig, overrides: dict):
    hp = dict(arch.hyperparams)
    train_kw = cfg.to_dict()
    train_names = set(train_kw)
    for key, value in overrides.items():
        scope, _, name = key.rpartition(".")
        if scope == "train" or (not scope and name in train_names):
            if name not in train_names:
                raise ConfigError(f"unknown train setting {name!r} in sweep grid")
            train_kw[name] = value
        elif scope in ("arch", ""):
            hp[name] = value
        else:
            raise ConfigError(f"sweep key {key!r} must be prefixed with arch. or train.")
    return ArchSpec(arch.arch_name, hp), TrainConfig.from_dict(train_kw)


def select_best(trials) -> int | None:
    ok = [(t["best_val"], i) for i, t in enumerate(trials) if t["status"] == "ok"]
    return min(ok)[1] if ok else None


def sweep(sweep_cfg: SweepConfig, base: TrainConfig, arch: ArchSpec, data: SupervisedData,
          report_path=None, workers=1, dataset_digest="") -> SweepResult:
    """Grid sweep; each trial gets a seed mixed from the base seed and its index."""
    combos = sweep_cfg.combinations()

    def run(i, overrides):
        record = {"trial_id": i, "config": overrides, "best_val": None, "status": "ok"}
        try:
            a, cfg = apply_overrides(arch, base, overrides)
            cfg.seed = trial_seed(base.seed, i)
            model = build_model(a, data.task, cfg.seed)
            ckpt = train(model, data, cfg, dataset_digest=dataset_digest)
            ckpt.extra = {"sweep_trial": i, "overrides": overrides}
            record["best_val"] = ckpt.best_val
            record["best_epoch"] = ckpt.best_epoch
            return record, ckpt
        except NonFiniteLoss as exc:
            record.update(status="failed", error=str(exc))
            return record, None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda item: run(*item), enumerate(combos)))
    else:
        results = [run(i, c) for i, c in enumerate(combos)]
    trials = [r for r, _ in results]
    best = select_best(trials)
    if report_path is not None:
        path = Path(report_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in trials:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    keep = results[best][1] if best is not None and sweep_cfg.consolidate else None
    return SweepResult(trials, best, keep)


def curves_csv(curves) -> str:
    keys = list(curves[0]) if curves else ["epoch", "train_loss", "val_loss"]
    lines = [",".join(keys)]
    for row in curves:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys))
    return "\n".join(lines) + "\n"
