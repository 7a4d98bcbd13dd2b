"""Random-feature networks with frozen hidden weights.

A bank evaluates  beta + scale * sum_i W_i sigma(tau_i t + a_i . x + b_i).
With ``fourier_pairs`` each hidden triple also carries a sine partner, which
is the (cos, sin) form fitted in the Fourier-feature experiments.
Derivatives are closed form up to total order 2.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .sampling import CollocationSet, HiddenSamples, ParameterError

SATURATION = 40.0


class Activation(enum.Enum):
    TANH = "tanh"
    COS = "cos"
    SIGMOID = "sigmoid"

    @classmethod
    def parse(cls, name) -> "Activation":
        if isinstance(name, cls):
            return name
        return cls(str(name).strip().lower())


def sigma(kind: Activation, z, order: int = 0) -> np.ndarray:
    """sigma^(order)(z) for order 0, 1, 2."""
    z = np.asarray(z, dtype=float)
    if order not in (0, 1, 2):
        raise ParameterError(f"activation derivative order {order} not supported")
    if kind is Activation.COS:
        if order == 1:
            return -np.sin(z)
        return np.cos(z) if order == 0 else -np.cos(z)
    if kind is Activation.TANH:
        s = np.tanh(z)
        if order == 0:
            return np.where(np.abs(z) > SATURATION, np.sign(z), s)
        out = 1 - s * s if order == 1 else -2 * s * (1 - s * s)
    else:
        s = expit(z)
        if order == 0:
            return np.where(np.abs(z) > SATURATION, (z > 0).astype(float), s)
        out = s * (1 - s) if order == 1 else s * (1 - s) * (1 - 2 * s)
    # short-circuit deep saturation so heavy-tailed pre-activations stay clean
    return np.where(np.abs(z) > SATURATION, 0.0, out)


SUP_BOUNDS = {
    # sup |sigma^(k)| for k = 0, 1, 2
    Activation.TANH: (1.0, 1.0, 4 / (3 * np.sqrt(3))),
    Activation.SIGMOID: (1.0, 0.25, 1 / (6 * np.sqrt(3))),
    Activation.COS: (1.0, 1.0, 1.0),
}


@dataclass(frozen=True)
class FeatureBank:
    tau: np.ndarray
    a: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.TANH
    scale: float = 1.0
    fourier_pairs: bool = False

    def __post_init__(self):
        h = HiddenSamples(self.tau, self.a, self.b)
        object.__setattr__(self, "tau", h.tau)
        object.__setattr__(self, "a", h.a)
        object.__setattr__(self, "b", h.b)
        object.__setattr__(self, "activation", Activation.parse(self.activation))
        if h.n < 1:
            raise ParameterError("a bank needs at least one feature")
        if not self.scale > 0:
            raise ParameterError("scale must be positive")
        if self.fourier_pairs and self.activation is not Activation.COS:
            raise ParameterError("fourier_pairs requires the cos activation")

    @classmethod
    def from_samples(cls, hidden: HiddenSamples, **kw) -> "FeatureBank":
        return cls(hidden.tau, hidden.a, hidden.b, **kw)

    @property
    def n(self) -> int:
        return len(self.tau)

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def n_features(self) -> int:
        return self.n * (2 if self.fourier_pairs else 1)


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    bias: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))

    def coefficients(self) -> np.ndarray:
        if self.bias is None:
            return self.w
        return np.append(self.w, self.bias)

    def __add__(self, other: "WeightVector") -> "WeightVector":
        if (self.bias is None) != (other.bias is None):
            raise ValueError("bias presence differs")
        bias = None if self.bias is None else self.bias + other.bias
        return WeightVector(self.w + other.w, bias)

    def scaled(self, c: float) -> "WeightVector":
        return WeightVector(c * self.w, None if self.bias is None else c * self.bias)


def _points(t, x, d):
    t = np.atleast_1d(np.asarray(t, dtype=float)).reshape(-1)
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        # 1-D input is a batch of scalars when d == 1, else a single point
        x = x.reshape(-1, 1) if d == 1 else x.reshape(1, -1)
    if x.shape[1] != d:
        raise ValueError(f"x has dimension {x.shape[1]}, bank expects {d}")
    if len(x) != len(t):
        if len(t) == 1:
            t = np.full(len(x), t[0])
        else:
            raise ValueError("t and x lengths differ")
    return t, x


def _multi_index(order_x, d) -> tuple:
    if order_x is None:
        return (0,) * d
    if isinstance(order_x, (int, np.integer)):
        order_x = (int(order_x),) if d == 1 else None
        if order_x is None:
            raise ParameterError("give a multi-index for d > 1")
    mi = tuple(int(k) for k in order_x)
    if len(mi) != d or min(mi) < 0:
        raise ParameterError(f"multi-index {mi} does not match d={d}")
    return mi


def design_matrix(bank: FeatureBank, t, x=None, order_t: int = 0, order_x=None,
                  bias: bool = True) -> np.ndarray:
    """Feature (or feature-derivative) matrix with rows per point.

    Columns are [sigma features, sine partners if paired, constant if bias].
    """
    if isinstance(t, CollocationSet):
        t, x = t.t, t.x
    t, x = _points(t, x, bank.d)
    mi = _multi_index(order_x, bank.d)
    k = int(order_t) + sum(mi)
    if order_t < 0 or k > 2:
        raise ParameterError(f"derivative of total order {k} not supported")
    # per-axis outer products keep each row independent of the batch size
    z = np.outer(t, bank.tau)
    for j in range(bank.d):
        z += np.outer(x[:, j], bank.a[:, j])
    z += bank.b
    fac = bank.tau ** order_t * np.prod(bank.a ** np.array(mi), axis=1) * bank.scale
    n = bank.n
    out = np.empty((len(t), bank.n_features + int(bias)))
    if bank.fourier_pairs:
        # partner is sigma(z - pi/2) = sin z; its derivatives rotate through +-cos, +-sin
        c, s = np.cos(z), np.sin(z)
        first, second = ((c, s), (-s, c), (-c, -s))[k]
        np.multiply(first, fac, out=out[:, :n])
        np.multiply(second, fac, out=out[:, n:2 * n])
    else:
        np.multiply(sigma(bank.activation, z, k), fac, out=out[:, :n])
    if bias:
        out[:, -1] = 1.0 if k == 0 else 0.0
    return out


def _check_weights(bank, weights):
    if len(weights.w) != bank.n_features:
        raise ValueError(f"{len(weights.w)} weights for {bank.n_features} features")


def evaluate(bank: FeatureBank, weights: WeightVector, t, x) -> np.ndarray:
    return eval_derivative(bank, weights, t, x, 0, None)


def eval_derivative(bank: FeatureBank, weights: WeightVector, t, x,
                    order_t: int = 0, order_x=None) -> np.ndarray:
    _check_weights(bank, weights)
    A = design_matrix(bank, t, x, order_t, order_x, bias=weights.bias is not None)
    return A @ weights.coefficients()


def laplacian(bank: FeatureBank, weights: WeightVector, t, x) -> np.ndarray:
    out = 0.0
    for j in range(bank.d):
        mi = [0] * bank.d
        mi[j] = 2
        out = out + eval_derivative(bank, weights, t, x, 0, mi)
    return out


def gradient(bank: FeatureBank, weights: WeightVector, t, x) -> np.ndarray:
    cols = []
    for j in range(bank.d):
        mi = [0] * bank.d
        mi[j] = 1
        cols.append(eval_derivative(bank, weights, t, x, 0, mi))
    return np.stack(cols, axis=-1)


class Network:
    """Callable pairing of a bank and weights with the derivative hooks the
    residual functionals use."""

    def __init__(self, bank: FeatureBank, weights: WeightVector):
        _check_weights(bank, weights)
        self.bank = bank
        self.weights = weights
        self.d = bank.d

    def __call__(self, t, x):
        return evaluate(self.bank, self.weights, t, x)

    def dt(self, t, x):
        return eval_derivative(self.bank, self.weights, t, x, 1)

    def grad(self, t, x):
        return gradient(self.bank, self.weights, t, x)

    def dx(self, t, x):
        return self.grad(t, x)[..., 0]

    def dxx(self, t, x):
        return eval_derivative(self.bank, self.weights, t, x, 0, (2,) + (0,) * (self.d - 1))

    def lap(self, t, x):
        return laplacian(self.bank, self.weights, t, x)


def amplitude_phase_collapse(bank: FeatureBank, weights: WeightVector):
    """a cos z + c sin z = sqrt(a^2+c^2) cos(z - atan2(c, a))."""
    if bank.activation is not Activation.COS or not bank.fourier_pairs:
        raise ParameterError("collapse needs a cos bank with fourier pairs")
    _check_weights(bank, weights)
    ca, cs = weights.w[:bank.n], weights.w[bank.n:]
    amp = np.hypot(ca, cs)
    phase = np.arctan2(cs, ca)
    single = FeatureBank(bank.tau, bank.a, bank.b - phase, Activation.COS, bank.scale, False)
    return single, WeightVector(amp, weights.bias)


# on-disk record: magic, version, then fixed field order
_MAGIC = b"RANNBANK"
_VERSION = 1
_TAGS = {Activation.TANH: 0, Activation.COS: 1, Activation.SIGMOID: 2}


def dumps_model(bank: FeatureBank, weights: WeightVector) -> bytes:
    _check_weights(bank, weights)
    has_bias = weights.bias is not None
    head = struct.pack("<8sIIIIdBB", _MAGIC, _VERSION, bank.d, bank.n, _TAGS[bank.activation],
                       float(bank.scale), int(bank.fourier_pairs), int(has_bias))
    hidden = np.column_stack([bank.tau, bank.a, bank.b]).astype("<f8")
    tail = struct.pack("<d", float(weights.bias) if has_bias else 0.0)
    return head + hidden.tobytes() + weights.w.astype("<f8").tobytes() + tail


def loads_model(blob: bytes):
    fmt = "<8sIIIIdBB"
    off = struct.calcsize(fmt)
    magic, version, d, n, tag, scale, pairs, has_bias = struct.unpack(fmt, blob[:off])
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not a feature-bank record of a known version")
    hid = np.frombuffer(blob, "<f8", n * (d + 2), off).reshape(n, d + 2)
    off += hid.nbytes
    nw = n * (2 if pairs else 1)
    w = np.frombuffer(blob, "<f8", nw, off).copy()
    off += w.nbytes
    (bias,) = struct.unpack("<d", blob[off:off + 8])
    act = {v: k for k, v in _TAGS.items()}[tag]
    bank = FeatureBank(hid[:, 0].copy(), hid[:, 1:1 + d].copy(), hid[:, -1].copy(),
                       act, scale, bool(pairs))
    return bank, WeightVector(w, bias if has_bias else None)


def save_model(path, bank: FeatureBank, weights: WeightVector) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(bank, weights))


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())


def fourier_bank(hidden: HiddenSamples) -> FeatureBank:
    """Cos/sin pair bank with the N^{-1/2} prefactor."""
    return FeatureBank.from_samples(hidden, activation=Activation.COS,
                                    scale=1 / np.sqrt(hidden.n), fourier_pairs=True)


def total_orders(d: int, max_order: int = 2) -> Sequence[tuple]:
    """All (order_t, multi_index) with total order <= max_order."""
    out = []
    for ot in range(max_order + 1):
        for mi in np.ndindex(*([max_order + 1] * d)):
            if ot + sum(mi) <= max_order:
                out.append((ot, tuple(int(k) for k in mi)))
    return out
