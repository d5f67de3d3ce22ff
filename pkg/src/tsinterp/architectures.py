"""Default architectures and the custom-architecture registry.

Every model maps a (batch, L_in, c_in) input to (batch, L_out, c_out) for
regression or (batch, 1, K) logits for classification.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensorcore as tc
from .errors import (
    ContractViolation,
    DuplicateName,
    IncompatibleHyperparams,
    NotStateful,
    ReceptiveFieldWarning,
    ShapeMismatch,
    StateShapeMismatch,
    UnknownArchitecture,
)
from .tensorcore import Tensor
from .timebase import TaskSpec


@dataclass
class ArchSpec:
    arch_name: str
    hyperparams: dict = field(default_factory=dict)

    def to_dict(self):
        return {"arch_name": self.arch_name, "hyperparams": dict(self.hyperparams)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["arch_name"], dict(d.get("hyperparams", {})))


def _uniform(rng, shape, fan_in, gain=1.0):
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _gain(activation):
    return np.sqrt(2.0) if activation == "relu" else 1.0


class Model:
    """Base class: named parameters plus a forward pass obeying the shape contract."""

    defaults: dict = {}
    stateful_capable = False

    def __init__(self, spec: ArchSpec, task: TaskSpec, seed: int = 0):
        self.spec = ArchSpec(spec.arch_name, {**self.defaults, **spec.hyperparams})
        self.hp = self.spec.hyperparams
        self.task = task
        self.seed = int(seed)
        self.input_shape = task.input_shape
        self.output_shape = task.output_shape
        self.params: dict[str, Tensor] = {}
        self.state = None
        self.training = False
        self._rng = np.random.default_rng(self.seed)
        self._dropout_rng = np.random.default_rng([self.seed, 1])
        self.build(self._rng)

    @property
    def out_size(self):
        return int(np.prod(self.output_shape))

    @property
    def stateful(self):
        return bool(self.hp.get("stateful", False))

    def add_param(self, name, values):
        self.params[name] = Tensor(values, requires_grad=True, name=name)
        return self.params[name]

    def build(self, rng):
        raise NotImplementedError

    def forward(self, x):
        raise NotImplementedError

    def __call__(self, x, **kwargs):
        x = tc.as_tensor(x)
        if x.ndim != 3 or x.shape[1:] != tuple(self.input_shape):
            raise ShapeMismatch(
                f"{self.spec.arch_name}: expected (batch, {self.input_shape[0]}, "
                f"{self.input_shape[1]}), got {x.shape}"
            )
        return self.forward(x, **kwargs)

    def head(self, features):
        """Linear map from (batch, F) features onto the output contract."""
        out = features @ self.params["head.w"] + self.params["head.b"]
        return tc.reshape(out, (features.shape[0],) + tuple(self.output_shape))

    def add_head(self, rng, width):
        self.add_param("head.w", _uniform(rng, (width, self.out_size), width))
        self.add_param("head.b", np.zeros(self.out_size))

    def parameters(self):
        return list(self.params.values())

    def num_parameters(self):
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, arrays):
        missing = set(self.params) ^ set(arrays)
        if missing:
            raise ShapeMismatch(f"parameter names differ: {sorted(missing)}")
        for k, v in arrays.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self.params[k].shape:
                raise ShapeMismatch(f"parameter {k}: {v.shape} vs {self.params[k].shape}")
            self.params[k].data = v.copy()

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def _dropout(self, x):
        rate = float(self.hp.get("dropout", 0.0))
        if not self.training or rate <= 0:
            return x
        return tc.dropout(x, rate, self._dropout_rng)

    # state management
    def reset_state(self):
        if not self.stateful_capable:
            raise NotStateful(f"{self.spec.arch_name} keeps no recurrent state")
        self.state = None
        return self

    def detach_state(self):
        if not self.stateful_capable:
            raise NotStateful(f"{self.spec.arch_name} keeps no recurrent state")
        if self.state is not None:
            self.state = [(h.detach(), c.detach()) for h, c in self.state]
        return self

    def trim_state(self, n):
        """Keep the carry of the first ``n`` batch lanes (used for a short final batch)."""
        if self.state is not None:
            self.state = [(h[:n], c[:n]) for h, c in self.state]
        return self


# --- MLP --------------------------------------------------------------------

class MLP(Model):
    defaults = {"widths": [64], "activation": "relu", "dropout": 0.0}

    def build(self, rng):
        widths = list(self.hp["widths"])
        act = self.hp["activation"]
        if act not in tc.ACTIVATIONS:
            raise IncompatibleHyperparams(f"unknown activation {act!r}")
        fan = int(np.prod(self.input_shape))
        for i, w in enumerate(widths):
            self.add_param(f"fc{i}.w", _uniform(rng, (fan, w), fan, _gain(act)))
            self.add_param(f"fc{i}.b", np.zeros(w))
            fan = w
        self.add_head(rng, fan)

    def forward(self, x):
        act = tc.ACTIVATIONS[self.hp["activation"]]
        h = tc.flatten(x, 1)
        for i in range(len(self.hp["widths"])):
            h = act(h @ self.params[f"fc{i}.w"] + self.params[f"fc{i}.b"])
            h = self._dropout(h)
        return self.head(h)


# --- convolutional ------------------------------------------------------------

class _ConvNet(Model):
    """Residual blocks of dilated 1-D convolutions (shared by TCN and CNN)."""

    defaults = {"channels": [16, 16], "kernel_size": 3, "dilations": None,
                "convs_per_block": 2, "activation": "relu", "dropout": 0.0}
    causal = True

    @property
    def dilations(self):
        d = self.hp.get("dilations")
        return list(d) if d else [2 ** i for i in range(len(self.hp["channels"]))]

    def receptive_field(self):
        k, n = int(self.hp["kernel_size"]), int(self.hp["convs_per_block"])
        return 1 + sum(n * (k - 1) * d for d in self.dilations)

    def build(self, rng):
        chans = list(self.hp["channels"])
        k = int(self.hp["kernel_size"])
        n = int(self.hp["convs_per_block"])
        act = self.hp["activation"]
        if k < 1 or n < 1 or not chans:
            raise IncompatibleHyperparams("need kernel_size >= 1, convs_per_block >= 1, channels")
        if len(self.dilations) != len(chans):
            raise IncompatibleHyperparams("one dilation per block required")
        if any(d < 1 for d in self.dilations):
            raise IncompatibleHyperparams("dilations must be >= 1")
        if act not in tc.ACTIVATIONS:
            raise IncompatibleHyperparams(f"unknown activation {act!r}")
        self._check_length()
        c_prev = self.input_shape[1]
        for b, c in enumerate(chans):
            cin = c_prev
            for j in range(n):
                self.add_param(f"block{b}.conv{j}.w", _uniform(rng, (k, cin, c), k * cin, _gain(act)))
                self.add_param(f"block{b}.conv{j}.b", np.zeros(c))
                cin = c
            if c_prev != c:
                self.add_param(f"block{b}.down.w", _uniform(rng, (c_prev, c), c_prev))
                self.add_param(f"block{b}.down.b", np.zeros(c))
            c_prev = c
        self.add_head(rng, c_prev)

    def _check_length(self):
        pass

    def features(self, x):
        """Feature map after every block, each (batch, L_b, C_b)."""
        act = tc.ACTIVATIONS[self.hp["activation"]]
        n = int(self.hp["convs_per_block"])
        maps = []
        h = x
        for b, d in enumerate(self.dilations):
            res = h
            for j in range(n):
                h = tc.conv1d(h, self.params[f"block{b}.conv{j}.w"], d, self.causal)
                h = act(h + self.params[f"block{b}.conv{j}.b"])
                h = self._dropout(h)
            if f"block{b}.down.w" in self.params:
                res = res @ self.params[f"block{b}.down.w"] + self.params[f"block{b}.down.b"]
            if not self.causal:
                # valid convolutions shorten the map: align the residual on the right
                res = tc.slice_rows(res, res.shape[1] - h.shape[1], res.shape[1])
            h = act(h + res)
            maps.append(h)
        return maps


class TCN(_ConvNet):
    causal = True

    def _check_length(self):
        rf = self.receptive_field()
        if rf > self.input_shape[0]:
            warnings.warn(
                f"TCN receptive field {rf} exceeds input length {self.input_shape[0]}",
                ReceptiveFieldWarning,
                stacklevel=3,
            )

    def forward(self, x):
        last = self.features(x)[-1]
        return self.head(last[:, -1, :])


class CNN(_ConvNet):
    causal = False

    def _check_length(self):
        k, n = int(self.hp["kernel_size"]), int(self.hp["convs_per_block"])
        remaining = self.input_shape[0] - sum(n * (k - 1) * d for d in self.dilations)
        if remaining < 1:
            raise IncompatibleHyperparams(
                f"CNN: valid convolutions shrink input length {self.input_shape[0]} below 1"
            )

    def forward(self, x):
        last = self.features(x)[-1]
        return self.head(tc.mean(last, axis=1))


# --- recurrent --------------------------------------------------------------

class LSTM(Model):
    """Stacked LSTM; the head reads the last hidden state of the top layer."""

    defaults = {"hidden_size": 32, "depth": 1, "dropout": 0.0}
    stateful_capable = False

    def build(self, rng):
        H = int(self.hp["hidden_size"])
        if H <= 0 or int(self.hp["depth"]) < 1:
            raise IncompatibleHyperparams("hidden_size and depth must be positive")
        cin = self.input_shape[1]
        for layer in range(int(self.hp["depth"])):
            self.add_param(f"l{layer}.wx", _uniform(rng, (cin, 4 * H), H))
            self.add_param(f"l{layer}.wh", _uniform(rng, (H, 4 * H), H))
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0  # forget gate
            self.add_param(f"l{layer}.b", b)
            self._build_extra(rng, layer, cin, H)
            cin = H
        self.add_head(rng, H)

    def _build_extra(self, rng, layer, cin, H):
        pass

    def _gates(self, layer, x_t, h):
        return x_t @ self.params[f"l{layer}.wx"] + h @ self.params[f"l{layer}.wh"] + self.params[f"l{layer}.b"]

    def _cell(self, z, c, H):
        i = tc.sigmoid(z[:, 0:H])
        f = tc.sigmoid(z[:, H:2 * H])
        g = tc.tanh(z[:, 2 * H:3 * H])
        o = tc.sigmoid(z[:, 3 * H:4 * H])
        c = f * c + i * g
        return o * tc.tanh(c), c

    def _layer_out(self, layer, x_t, h):
        return h

    def sequence(self, x, init=None):
        """Run all layers; returns top-layer outputs per step and final (h, c) per layer."""
        B, L, _ = x.shape
        H = int(self.hp["hidden_size"])
        steps = [x[:, t, :] for t in range(L)]
        final = []
        for layer in range(int(self.hp["depth"])):
            if init is None:
                h, c = Tensor(np.zeros((B, H))), Tensor(np.zeros((B, H)))
            else:
                h, c = init[layer]
            outs = []
            for x_t in steps:
                h, c = self._cell(self._gates(layer, x_t, h), c, H)
                outs.append(self._dropout(self._layer_out(layer, x_t, h)))
            final.append((h, c))
            steps = outs
        return steps, final

    def forward(self, x):
        steps, _ = self.sequence(x)
        return self.head(steps[-1])


class LSTMv2(LSTM):
    """LSTM with per-step layer normalization of the gate pre-activations,
    residual connections around each layer and an optional carried state."""

    defaults = {"hidden_size": 32, "depth": 2, "dropout": 0.0, "stateful": False}
    stateful_capable = True

    def _build_extra(self, rng, layer, cin, H):
        self.add_param(f"l{layer}.ln_g", np.ones(4 * H))
        self.add_param(f"l{layer}.ln_b", np.zeros(4 * H))
        if cin != H:
            self.add_param(f"l{layer}.proj", _uniform(rng, (cin, H), cin))

    def _gates(self, layer, x_t, h):
        z = x_t @ self.params[f"l{layer}.wx"] + h @ self.params[f"l{layer}.wh"]
        z = tc.layer_norm(z, self.params[f"l{layer}.ln_g"], self.params[f"l{layer}.ln_b"])
        return z + self.params[f"l{layer}.b"]

    def _layer_out(self, layer, x_t, h):
        skip = x_t @ self.params[f"l{layer}.proj"] if f"l{layer}.proj" in self.params else x_t
        return h + skip

    def forward(self, x, carry_state=None):
        carry = self.stateful if carry_state is None else bool(carry_state)
        init = None
        if carry and self.state is not None:
            if self.state[0][0].shape[0] != x.shape[0]:
                raise StateShapeMismatch(
                    f"carried state has batch {self.state[0][0].shape[0]}, input has {x.shape[0]}"
                )
            init = self.state
        steps, final = self.sequence(x, init)
        if carry:
            self.state = final
        return self.head(steps[-1])


# --- registry ---------------------------------------------------------------

_REGISTRY: dict = {}


def _register(name, ctor):
    _REGISTRY[name] = ctor


for _name, _cls in (("MLP", MLP), ("CNN", CNN), ("TCN", TCN), ("LSTM", LSTM), ("LSTMv2", LSTMv2)):
    _register(_name, _cls)

DEFAULT_ARCHITECTURES = ("MLP", "CNN", "TCN", "LSTM", "LSTMv2")


def available():
    return sorted(_REGISTRY)


def get_constructor(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownArchitecture(f"unknown architecture {name!r}; known: {available()}") from None


def build_model(spec: ArchSpec, task: TaskSpec, seed: int = 0) -> Model:
    return get_constructor(spec.arch_name)(spec, task, seed)


def _probe_tasks():
    comps = ("p0", "p1")
    return [
        TaskSpec((-3, 0), comps, (1, 2), ("p0",)),
        TaskSpec((-2, 1), comps[:1], (0, 0), ("p1",), "classification", 3),
    ]


def check_conformance(ctor, hyperparams=None, name="custom"):
    """Shape, gradient and determinism checks for a model constructor.

    Raises ContractViolation naming the first failing check.
    """
    rng = np.random.default_rng(1234)
    for task in _probe_tasks():
        spec = ArchSpec(name, dict(hyperparams or {}))
        try:
            m1 = ctor(spec, task, 7)
            m2 = ctor(spec, task, 7)
        except Exception as exc:  # noqa: BLE001 - surfaced as a named violation
            raise ContractViolation("construct", str(exc)) from exc
        if not isinstance(m1, Model):
            raise ContractViolation("construct", "constructor must return a Model")
        x = rng.normal(size=(3,) + task.input_shape)
        with tc.no_grad():
            try:
                y1 = m1(Tensor(x)).data
            except Exception as exc:  # noqa: BLE001
                raise ContractViolation("shape", str(exc)) from exc
            expected = (3,) + tuple(task.output_shape)
            if y1.shape != expected:
                raise ContractViolation("shape", f"output {y1.shape}, expected {expected}")
            y2 = m2(Tensor(x)).data
        if not np.array_equal(y1, y2):
            raise ContractViolation("determinism", "same seed gave different outputs")
        # input gradients are what attribution consumes
        if not tc.gradcheck(lambda inp: tc.sum(tc.tanh(m1(inp))), [x[:1]]):
            raise ContractViolation("gradient", "analytic and numerical input gradients disagree")


def register_architecture(name, ctor, hyperparams=None, replace=False):
    """Add ``ctor(spec, task, seed) -> Model`` under ``name`` after conformance checks."""
    if name in _REGISTRY and not replace:
        raise DuplicateName(f"architecture {name!r} already registered")
    check_conformance(ctor, hyperparams, name)
    _register(name, ctor)
    return name


def unregister_architecture(name):
    if name in DEFAULT_ARCHITECTURES:
        raise UnknownArchitecture(f"cannot remove default architecture {name!r}")
    _REGISTRY.pop(name, None)


def preset(base, hyperparams):
    """Constructor for ``base`` with ``hyperparams`` as overridable defaults."""
    base_ctor = get_constructor(base)

    def ctor(spec, task, seed):
        merged = ArchSpec(base, {**hyperparams, **spec.hyperparams})
        model = base_ctor(merged, task, seed)
        model.spec = ArchSpec(spec.arch_name, model.spec.hyperparams)
        return model

    return ctor
