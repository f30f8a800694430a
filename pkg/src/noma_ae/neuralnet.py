"""Small dense networks with hand-written reverse-mode gradients and Adam.

Only what the AE needs: fully connected layers, tanh / sigmoid / linear
activations, identity skip connections between equal-width layers, and an
Adam optimizer driven by a step-wise exponential learning-rate schedule.
Everything runs in float64.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import StructuralError, TrainingDivergence

ACTIVATIONS = ("tanh", "sigmoid", "linear")

CHECKPOINT_MAGIC = b"NOMAAE-NN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "tanh"
    residual_from: int | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise StructuralError("layer dimensions must be positive")


def validate_specs(specs):
    specs = list(specs)
    if not specs:
        raise StructuralError("network needs at least one layer")
    for j, spec in enumerate(specs):
        if j > 0 and spec.in_dim != specs[j - 1].out_dim:
            raise StructuralError(
                f"layer {j} expects {spec.in_dim} inputs, previous layer gives {specs[j - 1].out_dim}"
            )
        if spec.residual_from is not None:
            i = spec.residual_from
            if not 0 <= i < j:
                raise StructuralError(f"layer {j}: residual_from={i} must reference an earlier layer")
            if specs[i].out_dim != spec.out_dim:
                raise StructuralError(f"layer {j}: residual source width {specs[i].out_dim} != {spec.out_dim}")
    return specs


def mlp_specs(in_dim, out_dim, width=32, n_hidden=8, out_activation="linear", residual=True):
    """Input layer + ``n_hidden`` hidden layers of ``width`` tanh units + output layer.

    Layer 0 is the input layer, layers 1..n_hidden are hidden, the last one is
    the output. With ``residual`` the output of hidden layer i feeds the
    pre-activation of hidden layer i+2 for odd i (1, 3, 5, ...).
    """
    specs = [LayerSpec(in_dim, width, "tanh")]
    for i in range(1, n_hidden + 1):
        skip = i - 2 if residual and i >= 3 and i % 2 == 1 else None
        specs.append(LayerSpec(width, width, "tanh", skip))
    specs.append(LayerSpec(width, out_dim, out_activation))
    return validate_specs(specs)


@dataclass(frozen=True)
class TrainSchedule:
    lr0: float = 0.01
    decay_factor: float = 0.95
    decay_every: int = 100

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")

    def lr(self, epoch):
        return self.lr0 * self.decay_factor ** (epoch // self.decay_every)


def _layout(specs):
    """Offsets of (W_j, b_j) inside the flat parameter vector."""
    slots, pos = [], 0
    for s in specs:
        w = (pos, (s.in_dim, s.out_dim))
        pos += s.in_dim * s.out_dim
        b = (pos, (s.out_dim,))
        pos += s.out_dim
        slots.append((w, b))
    return slots, pos


def _views(flat, slots):
    ws, bs = [], []
    for (wo, wsh), (bo, bsh) in slots:
        ws.append(flat[wo:wo + wsh[0] * wsh[1]].reshape(wsh))
        bs.append(flat[bo:bo + bsh[0]])
    return ws, bs


class ModelParams:
    """Weights, biases and Adam state of one network.

    All parameters live in one contiguous float64 vector ``theta``;
    ``weights[j]`` (in_dim x out_dim) and ``biases[j]`` are views into it.
    ``m`` and ``v`` are the Adam moments with the same layout.
    """

    def __init__(self, specs, theta=None, m=None, v=None, step=0):
        self.specs = validate_specs(specs)
        self._slots, size = _layout(self.specs)
        self.theta = np.zeros(size) if theta is None else np.array(theta, dtype=np.float64)
        if self.theta.shape != (size,):
            raise StructuralError(f"expected {size} parameters, got {self.theta.shape}")
        self.m = np.zeros(size) if m is None else np.array(m, dtype=np.float64)
        self.v = np.zeros(size) if v is None else np.array(v, dtype=np.float64)
        self.step = int(step)
        self.weights, self.biases = _views(self.theta, self._slots)

    @property
    def n_params(self):
        return self.theta.size

    def split(self, flat):
        """Per-layer (weights, biases) views of a vector laid out like ``theta``."""
        return _views(flat, self._slots)

    def copy(self):
        return ModelParams(self.specs, self.theta, self.m, self.v, self.step)

    def __eq__(self, other):
        return (isinstance(other, ModelParams) and self.specs == other.specs
                and self.step == other.step
                and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.m, other.m) and np.array_equal(self.v, other.v))


def init_params(specs, rng):
    """Symmetric fan-based uniform init, zero biases."""
    params = ModelParams(specs)
    for s, w in zip(params.specs, params.weights):
        limit = np.sqrt(6.0 / (s.in_dim + s.out_dim))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return params


def _activate(kind, z):
    if kind == "tanh":
        return np.tanh(z, out=z)
    if kind == "sigmoid":
        # split on sign to stay finite for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activation_grad(kind, a):
    # expressed through the activation output
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return None


def forward(params, x):
    """Run the network on a batch ``x`` of shape (batch, in_dim).

    Returns the output and a cache holding every layer's input and output for
    :func:`backward`. A 1-D input is treated as a batch of one and the output
    is squeezed back.
    """
    x = np.asarray(x, dtype=np.float64)
    specs = params.specs
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != specs[0].in_dim:
        raise StructuralError(f"input has shape {x.shape}, network expects (*, {specs[0].in_dim})")
    outs = []
    a = x
    for j, s in enumerate(specs):
        z = a @ params.weights[j]
        z += params.biases[j]
        if s.residual_from is not None:
            z += outs[s.residual_from]
        a = _activate(s.activation, z)
        outs.append(a)
    cache = (x, outs)
    return (a[0] if squeeze else a), cache


def backward(params, cache, grad_out):
    """Back-propagate ``grad_out`` (dLoss/dOutput) through a cached forward pass.

    Returns ``(grad, grad_input)`` where ``grad`` is laid out like
    ``params.theta`` (use ``params.split(grad)`` for per-layer views).
    Residual connections receive gradient along both the skip and the main path.
    """
    x, outs = cache
    specs = params.specs
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != outs[-1].shape:
        raise StructuralError(f"gradient shape {g.shape} does not match output {outs[-1].shape}")
    grad = np.empty_like(params.theta)
    gws, gbs = params.split(grad)
    ones = np.ones(g.shape[0])
    n = len(specs)
    upstream = [None] * n
    upstream[-1] = g
    grad_in = None
    for j in range(n - 1, -1, -1):
        s = specs[j]
        d = upstream[j]
        if d is None:
            d = np.zeros_like(outs[j])
        dact = _activation_grad(s.activation, outs[j])
        dz = d if dact is None else d * dact
        a_prev = x if j == 0 else outs[j - 1]
        np.matmul(a_prev.T, dz, out=gws[j])
        np.matmul(ones, dz, out=gbs[j])
        g_prev = dz @ params.weights[j].T
        if j == 0:
            grad_in = g_prev
        elif upstream[j - 1] is None:
            upstream[j - 1] = g_prev
        else:
            upstream[j - 1] += g_prev
        if s.residual_from is not None:
            i = s.residual_from
            upstream[i] = dz.copy() if upstream[i] is None else upstream[i] + dz
    return grad, grad_in


BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def check_finite(params, grad, epoch=None):
    if np.all(np.isfinite(grad)):
        return
    gws, gbs = params.split(grad)
    for j, (gw, gb) in enumerate(zip(gws, gbs)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise TrainingDivergence(f"non-finite gradient in layer {j}", layer=j, epoch=epoch)


def adam_step(params, grad, lr, epoch=None):
    """One in-place Adam update (beta1=0.9, beta2=0.999, eps=1e-8)."""
    check_finite(params, grad, epoch)
    params.step += 1
    t = params.step
    params.m *= BETA1
    params.m += (1.0 - BETA1) * grad
    params.v *= BETA2
    params.v += (1.0 - BETA2) * grad * grad
    mhat = params.m / (1.0 - BETA1 ** t)
    vhat = params.v / (1.0 - BETA2 ** t)
    params.theta -= lr * mhat / (np.sqrt(vhat) + EPS)
    return params


# -- checkpoints ---------------------------------------------------------------

def dump_params(params, fh):
    """Write one network.

    Layout: magic, ``<II`` (version, header length), JSON header with the layer
    specs and Adam step, then ``theta``, ``m`` and ``v`` as little-endian
    float64, each in layer order (W_0, b_0, W_1, b_1, ...; W row-major).
    """
    header = {
        "version": CHECKPOINT_VERSION,
        "specs": [asdict(s) for s in params.specs],
        "step": params.step,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    fh.write(CHECKPOINT_MAGIC)
    fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
    fh.write(blob)
    for arr in (params.theta, params.m, params.v):
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(fh):
    magic = fh.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise StructuralError("not a network checkpoint")
    version, n = struct.unpack("<II", fh.read(8))
    if version != CHECKPOINT_VERSION:
        raise StructuralError(f"unsupported checkpoint version {version}")
    header = json.loads(fh.read(n).decode())
    specs = validate_specs(LayerSpec(**s) for s in header["specs"])
    size = _layout(specs)[1]

    def read():
        buf = fh.read(8 * size)
        if len(buf) != 8 * size:
            raise StructuralError("truncated checkpoint")
        return np.frombuffer(buf, dtype="<f8").astype(np.float64)

    theta, m, v = read(), read(), read()
    return ModelParams(specs, theta, m, v, header["step"])


def params_to_bytes(params):
    buf = io.BytesIO()
    dump_params(params, buf)
    return buf.getvalue()


def params_from_bytes(data):
    return load_params(io.BytesIO(data))
