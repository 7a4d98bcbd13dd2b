"""Hidden-weight laws and collocation point generators.

Everything here is a pure function of its arguments and a seed.  Seeds are
derived per purpose from a master seed through ``numpy.random.SeedSequence``
spawn keys, so a (width, repeat) cell can be regenerated on its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, special


class ParameterError(ValueError):
    """Raised when a spec violates one of its stated constraints."""


# fixed ids so derived streams never move when purposes are added
PURPOSES = {
    "hidden": 0,
    "collocation": 1,
    "eval": 2,
    "repeat": 3,
    "estimator": 4,
    "battery": 5,
}


def derive_seed(master: int, purpose: str, *counters: int) -> np.random.SeedSequence:
    """Counter-based child seed for ``purpose`` and integer counters."""
    key = (PURPOSES[purpose],) + tuple(int(c) for c in counters)
    return np.random.SeedSequence(int(master) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class HeavyTailPi:
    lambda_tau: float = 1.0
    lambda_a: float = 1.0


@dataclass(frozen=True)
class GaussianFourier:
    std: float = 10.0


@dataclass(frozen=True)
class SamplerSpec:
    kind: Union[HeavyTailPi, GaussianFourier]
    d: int = 1
    seed: int = 0

    def validate(self) -> None:
        if int(self.d) < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        k = self.kind
        if isinstance(k, HeavyTailPi):
            if not k.lambda_tau > 0.5:
                raise ParameterError(f"lambda_tau must be > 1/2, got {k.lambda_tau}")
            if not k.lambda_a > self.d / 2:
                raise ParameterError(
                    f"lambda_a must be > d/2 = {self.d / 2}, got {k.lambda_a}")
        elif isinstance(k, GaussianFourier):
            if not k.std > 0:
                raise ParameterError(f"std must be > 0, got {k.std}")
        else:
            raise ParameterError(f"unknown sampler kind {k!r}")


@dataclass(frozen=True)
class HiddenSamples:
    """n hidden triples stored column-wise: tau (n,), a (n, d), b (n,)."""
    tau: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float).reshape(-1)
        a = np.asarray(self.a, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if not (len(tau) == len(a) == len(b)):
            raise ValueError("tau, a, b lengths differ")
        if not (np.isfinite(tau).all() and np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("hidden samples must be finite")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return len(self.tau)

    @property
    def d(self) -> int:
        return self.a.shape[1]

    def __len__(self):
        return self.n


def sample_hidden(spec: SamplerSpec, n: int) -> HiddenSamples:
    spec.validate()
    d = int(spec.d)
    n = int(n)
    rng = make_rng(spec.seed)
    k = spec.kind
    if isinstance(k, HeavyTailPi):
        nu_t = 2 * k.lambda_tau - 1
        tau = rng.standard_t(nu_t, size=n) / np.sqrt(nu_t)
        # multivariate t: z / sqrt(chi2_nu) has density ~ (1+|a|^2)^-(nu+d)/2
        nu_a = 2 * k.lambda_a - d
        z = rng.standard_normal((n, d))
        w = rng.chisquare(nu_a, size=n)
        a = z / np.sqrt(w)[:, None]
        b = rng.standard_cauchy(n)
    else:
        tau = rng.normal(0.0, k.std, n)
        a = rng.normal(0.0, k.std, (n, d))
        b = rng.uniform(0.0, 2 * np.pi, n)
    return HiddenSamples(tau, a, b)


def _radial_factor(lam: float, d: int) -> float:
    # integral over R^d of (1+|a|^2)^-lam via the radial reduction
    area = 2 * np.pi ** (d / 2) / special.gamma(d / 2)
    val, _ = integrate.quad(lambda r: r ** (d - 1) * (1 + r * r) ** (-lam), 0, np.inf,
                            epsabs=0, epsrel=1e-12, limit=400)
    return area * val


@lru_cache(maxsize=64)
def normalization_constant(lambda_tau: float, lambda_a: float, d: int) -> float:
    """C_pi as the product of the tau, a and b integrals."""
    if not lambda_tau > 0.5 or not lambda_a > d / 2:
        raise ParameterError("C_pi is infinite for these exponents")
    c_tau = _radial_factor(lambda_tau, 1)
    c_a = _radial_factor(lambda_a, d)
    return c_tau * c_a * np.pi


def pi_density(kind: HeavyTailPi, d: int, tau, a, b) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    a = np.asarray(a, dtype=float)
    if a.ndim == tau.ndim:
        a2 = a * a
    else:
        a2 = (a * a).sum(-1)
    b = np.asarray(b, dtype=float)
    c = normalization_constant(float(kind.lambda_tau), float(kind.lambda_a), int(d))
    return ((1 + tau * tau) ** (-kind.lambda_tau) * (1 + a2) ** (-kind.lambda_a)
            / (1 + b * b) / c)


@dataclass
class CollocationSet:
    t: np.ndarray
    x: np.ndarray
    targets: Optional[np.ndarray] = None
    strategy: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        self.x = x
        if len(self.t) != len(self.x):
            raise ValueError("t and x lengths differ")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=float)
            if len(self.targets) != len(self.t):
                raise ValueError("targets length differs from points")

    def __len__(self):
        return len(self.t)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def with_targets(self, targets) -> "CollocationSet":
        return CollocationSet(self.t, self.x, targets, dict(self.strategy))


def sample_collocation_pme(d: int, n: int, t_range, seed) -> CollocationSet:
    """Half the points uniform on (0,1)^d, half on [0.2,0.8]^d; t uniform."""
    lo, hi = map(float, t_range)
    if not hi > lo:
        raise ParameterError("empty t_range")
    n = int(n)
    half = n // 2
    rng = make_rng(seed)
    strategy = {"kind": "pme-mixture", "outer": [0.0, 1.0], "inner": [0.2, 0.8],
                "per_stratum": half, "t_range": [lo, hi]}
    if n % 2:
        strategy["odd_n_rounded"] = True
    x = np.vstack([rng.uniform(0.0, 1.0, (half, d)), rng.uniform(0.2, 0.8, (half, d))])
    t = rng.uniform(lo, hi, 2 * half)
    return CollocationSet(t, x, None, strategy)


def sample_collocation_shock(n: int, t_max: float, shock_center: Callable,
                             seed, x_range=(-5.0, 5.0)) -> CollocationSet:
    """Uniform stratum plus a N(x0(t), 1) stratum redrawn until inside x_range."""
    n = int(n)
    half = n // 2
    lo, hi = map(float, x_range)
    rng = make_rng(seed)
    t = rng.uniform(0.0, t_max, 2 * half)
    x_uni = rng.uniform(lo, hi, half)
    c = np.asarray(shock_center(t[half:]), dtype=float) * np.ones(half)
    x_imp = rng.normal(c, 1.0)
    bad = (x_imp < lo) | (x_imp > hi)
    redraws = 0
    while bad.any():
        redraws += int(bad.sum())
        x_imp[bad] = rng.normal(c[bad], 1.0)
        bad = (x_imp < lo) | (x_imp > hi)
    strategy = {"kind": "shock-mixture", "x_range": [lo, hi], "t_max": float(t_max),
                "per_stratum": half, "importance_std": 1.0, "redraws": redraws}
    if n % 2:
        strategy["odd_n_rounded"] = True
    return CollocationSet(t, np.concatenate([x_uni, x_imp]), None, strategy)
