"""Porous medium equation: Barenblatt profile and PINN residual."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

from .sampling import CollocationSet


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BarenblattParams:
    m: float = 2.0
    d: int = 1
    b_const: float = 1.0
    t0: float = 0.1
    center: Optional[tuple] = None  # defaults to the origin

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError("m must exceed 1")
        if int(self.d) < 1 or not self.b_const > 0 or not self.t0 > 0:
            raise ValueError("need d >= 1, b_const > 0, t0 > 0")

    @property
    def alpha(self) -> float:
        return self.d / (self.d * (self.m - 1) + 2)

    @property
    def beta(self) -> float:
        return 1 / (self.d * (self.m - 1) + 2)

    @property
    def kappa(self) -> float:
        # coefficient of |x|^2 / t^(2 beta) inside the positive part
        return (self.m - 1) / (2 * self.m) * self.beta

    def c(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.d)
        return np.broadcast_to(np.asarray(self.center, dtype=float), (self.d,))

    def support_radius(self, t) -> np.ndarray:
        return np.sqrt(self.b_const / self.kappa) * np.asarray(t, dtype=float) ** self.beta


def b_const_for_radius(d: int, radius: float, t0: float, m: float = 2.0) -> float:
    """b_const giving a support radius ``radius`` at time t0."""
    beta = 1 / (d * (m - 1) + 2)
    return radius ** 2 * (m - 1) / (2 * m) * beta / t0 ** (2 * beta)


def _prep(params, t, x):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("Barenblatt profile needs t > 0")
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        x = x.reshape(-1, 1) if params.d == 1 else x.reshape(1, -1)
    y = x - params.c()
    return t, y


def barenblatt(params: BarenblattParams, t, x) -> np.ndarray:
    t, y = _prep(params, t, x)
    r2 = (y * y).sum(-1)
    g = np.maximum(params.b_const - params.kappa * r2 / t ** (2 * params.beta), 0.0)
    return t ** -params.alpha * g ** (1 / (params.m - 1))


def barenblatt_derivatives(params: BarenblattParams, t, x):
    """(u, u_t, grad u, lap u) in closed form, valid strictly inside the support."""
    t, y = _prep(params, t, x)
    m, al, be, ka, d = params.m, params.alpha, params.beta, params.kappa, params.d
    r2 = (y * y).sum(-1)
    s = t ** (2 * be)
    g = params.b_const - ka * r2 / s
    inside = g > 0
    g = np.where(inside, g, 1.0)
    p = 1 / (m - 1)
    u = t ** -al * g ** p
    g_t = 2 * be * ka * r2 / (s * t)
    u_t = -al / t * u + t ** -al * p * g ** (p - 1) * g_t
    gx = -2 * ka / s                        # grad g = gx * y
    grad = (t ** -al * p * g ** (p - 1) * gx)[:, None] * y
    lap = t ** -al * p * (g ** (p - 1) * gx * d + (p - 1) * g ** (p - 2) * gx * gx * r2)
    z = ~inside
    u, u_t, lap = np.where(z, 0, u), np.where(z, 0, u_t), np.where(z, 0, lap)
    grad = np.where(z[:, None], 0, grad)
    return u, u_t, grad, lap


def barenblatt_mass(params: BarenblattParams, t: float) -> float:
    """Integral of u(t, .) over its support ball by radial quadrature."""
    if t <= 0:
        raise DomainError("t must be positive")
    d = params.d
    area = 2 * np.pi ** (d / 2) / special.gamma(d / 2)
    rad = float(params.support_radius(t))
    f = lambda r: r ** (d - 1) * barenblatt(params, t, np.eye(d)[0] * r + params.c())[0]
    val, _ = integrate.quad(f, 0, rad, epsabs=0, epsrel=1e-12, limit=200)
    return area * val


@dataclass
class PmeResidualReport:
    j_pde: float
    points_inside_support: int
    max_abs_residual: float
    residual: np.ndarray

    def __post_init__(self):
        assert self.j_pde >= 0


def _pow(u, k, m):
    if float(m).is_integer():
        return u ** int(k)
    # non-integer m: evaluate on |u| and keep the sign of u
    return np.sign(u) * np.abs(u) ** k


def pme_residual(net, m: float, points: CollocationSet) -> PmeResidualReport:
    """Monte Carlo mean of (u_t - Lap(u^m))^2 with the chain-rule expansion.

    ``net`` provides __call__, dt, grad and lap on (t, x) batches.
    """
    t, x = points.t, points.x
    u = np.asarray(net(t, x), dtype=float)
    ut = np.asarray(net.dt(t, x), dtype=float)
    g = np.asarray(net.grad(t, x), dtype=float).reshape(len(t), -1)
    lap = np.asarray(net.lap(t, x), dtype=float)
    lap_um = m * _pow(u, m - 1, m) * lap + m * (m - 1) * _pow(u, m - 2, m) * (g * g).sum(-1)
    res = ut - lap_um
    return PmeResidualReport(float(np.mean(res ** 2)), int(np.sum(u > 0)),
                             float(np.max(np.abs(res))) if len(res) else 0.0, res)


class BarenblattClosure:
    """Exact profile exposing the derivative hooks used by pme_residual."""

    def __init__(self, params: BarenblattParams):
        self.params = params
        self.d = params.d

    def __call__(self, t, x):
        return barenblatt(self.params, t, x)

    def dt(self, t, x):
        return barenblatt_derivatives(self.params, t, x)[1]

    def grad(self, t, x):
        return barenblatt_derivatives(self.params, t, x)[2]

    def lap(self, t, x):
        return barenblatt_derivatives(self.params, t, x)[3]


def pme_training_set(params: BarenblattParams, collocation: CollocationSet) -> CollocationSet:
    return collocation.with_targets(barenblatt(params, collocation.t, collocation.x))
