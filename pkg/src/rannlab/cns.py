"""1-D compressible Navier-Stokes travelling wave in Lagrangian coordinates.

System:  v_t - u_x = 0,   u_t + p(v)_x = mu (u_x / v)_x,   p(v) = eps/(v-1)^gamma.
A travelling profile (v, u)(x - s t) solves the first-order ODE
    v' = v/(mu s) (s^2 (v_minus - v) + p(v_minus) - p(v)).
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .sampling import CollocationSet, ParameterError


class VelocityMode(enum.Enum):
    PAPER_RELATION = "paper"          # u = -v / s
    MASS_CONSERVATION = "mass"        # u = -s v + C, u -> 0 at v_plus

    @classmethod
    def parse(cls, s) -> "VelocityMode":
        if isinstance(s, cls):
            return s
        s = str(s).strip().lower()
        aliases = {"paperrelation": "paper", "massconservation": "mass"}
        return cls(aliases.get(s, s))


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShockParams:
    mu: float = 1.0
    eps: float = 1e-3
    gamma: float = 2.0
    v_plus: float = 1.5
    v_minus: float = 1.1
    xi_range: tuple = (-5.0, 5.0)
    grid_points: int = 5000
    velocity_mode: VelocityMode = VelocityMode.MASS_CONSERVATION
    s: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "velocity_mode", VelocityMode.parse(self.velocity_mode))
        if not (1 < self.v_minus < self.v_plus):
            raise ParameterError(f"need 1 < v_minus < v_plus, got {self.v_minus}, {self.v_plus}")
        if not (self.mu > 0 and self.eps > 0 and self.gamma > 0):
            raise ParameterError("mu, eps, gamma must be positive")
        object.__setattr__(self, "s", rankine_hugoniot_speed(self))

    def pressure(self, v):
        return self.eps / (np.asarray(v, dtype=float) - 1) ** self.gamma

    def dpressure(self, v):
        return -self.gamma * self.eps / (np.asarray(v, dtype=float) - 1) ** (self.gamma + 1)

    def ode_rhs(self, v):
        s = self.s
        return v / (self.mu * s) * (s * s * (self.v_minus - v)
                                    + self.pressure(self.v_minus) - self.pressure(v))


def rankine_hugoniot_speed(params) -> float:
    vm, vp = params.v_minus, params.v_plus
    if not (1 < vm < vp):
        raise ParameterError("need 1 < v_minus < v_plus")
    p = lambda v: params.eps / (v - 1) ** params.gamma
    disc = (p(vm) - p(vp)) / (vp - vm)
    if not disc > 0:
        raise ParameterError("non-positive Rankine-Hugoniot discriminant")
    return float(np.sqrt(disc))


@dataclass(frozen=True)
class WaveProfile:
    xi: np.ndarray
    v: np.ndarray
    u: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi", "v", "u"])
            for row in zip(self.xi, self.v, self.u):
                w.writerow([repr(float(c)) for c in row])

    @classmethod
    def from_csv(cls, path) -> "WaveProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def velocity_from_volume(params: ShockParams, v):
    v = np.asarray(v, dtype=float)
    if params.velocity_mode is VelocityMode.PAPER_RELATION:
        return -v / params.s
    return params.s * (params.v_plus - v)


def integrate_wave(params: ShockParams, rtol: float = 1e-10, atol: float = 1e-12
                   ) -> WaveProfile:
    """Midpoint shooting: start at (v_minus+v_plus)/2 at xi=0, integrate both ways."""
    lo, hi = map(float, params.xi_range)
    xi = np.linspace(lo, hi, int(params.grid_points))
    v0 = 0.5 * (params.v_minus + params.v_plus)
    rhs = lambda _, v: params.ode_rhs(v)
    v = np.empty_like(xi)
    for end, mask in ((hi, xi >= 0), (lo, xi < 0)):
        if not mask.any():
            continue
        sol = solve_ivp(rhs, (0.0, end), [v0], method="RK45", rtol=rtol, atol=atol,
                        dense_output=True)
        if not sol.success:
            raise IntegrationError(f"RK45 failed towards xi={end}: {sol.message}")
        v[mask] = sol.sol(xi[mask])[0]
    if not (np.all(v > params.v_minus) and np.all(v < params.v_plus)):
        raise IntegrationError(
            f"profile left the band: min {v.min()!r}, max {v.max()!r}")
    return WaveProfile(xi, v, velocity_from_volume(params, v))


def wave_to_spacetime(profile: WaveProfile, params: ShockParams, t, x):
    """Linear interpolation at xi = x - s t, clamped to the end states."""
    xi = np.asarray(x, dtype=float) - params.s * np.asarray(t, dtype=float)
    return np.interp(xi, profile.xi, profile.v), np.interp(xi, profile.xi, profile.u)


class WaveField:
    """Exact travelling wave with derivatives from finite differences on the
    profile grid.  Exposes the same hooks as a fitted network pair."""

    def __init__(self, profile: WaveProfile, params: ShockParams):
        self.profile, self.params = profile, params
        xi = profile.xi
        self._d = {}
        for name, f in (("v", profile.v), ("u", profile.u)):
            f1 = np.gradient(f, xi, edge_order=2)
            self._d[name] = (f, f1, np.gradient(f1, xi, edge_order=2))

    def _at(self, name, k, t, x):
        xi = np.asarray(x, dtype=float).reshape(-1) - self.params.s * np.asarray(t, dtype=float)
        return np.interp(xi, self.profile.xi, self._d[name][k])

    def fields(self, t, x):
        """v, v_t, v_x, u, u_t, u_x, u_xx at the points."""
        s = self.params.s
        v, v1 = self._at("v", 0, t, x), self._at("v", 1, t, x)
        u, u1, u2 = self._at("u", 0, t, x), self._at("u", 1, t, x), self._at("u", 2, t, x)
        return dict(v=v, v_t=-s * v1, v_x=v1, u=u, u_t=-s * u1, u_x=u1, u_xx=u2)


class NetworkPair:
    """Two networks (v and u) sharing one evaluation protocol."""

    def __init__(self, v_net, u_net):
        self.v, self.u = v_net, u_net

    def fields(self, t, x):
        return dict(v=self.v(t, x), v_t=self.v.dt(t, x), v_x=self.v.dx(t, x),
                    u=self.u(t, x), u_t=self.u.dt(t, x), u_x=self.u.dx(t, x),
                    u_xx=self.u.dxx(t, x))


@dataclass
class CnsResidualReport:
    j1: float
    j2: float
    excluded: int
    r1: np.ndarray
    r2: np.ndarray


def cns_residuals(pair, params: ShockParams, points: CollocationSet,
                  mode: str = "lagrangian") -> CnsResidualReport:
    """Mean squared continuity and momentum residuals.

    Lagrangian: (v_t - u_x)^2 and (u_t + p'(v) v_x - mu (u_xx/v - u_x v_x/v^2))^2,
    points with v <= 1 are excluded.  Eulerian: v plays the role of rho in the
    conservative form with rho_t + (rho u)_x and (rho u)_t + (rho u^2)_x - mu u_xx.
    """
    f = pair.fields(points.t, points.x)
    v, vt, vx, u, ut, ux, uxx = (np.asarray(f[k], dtype=float)
                                 for k in ("v", "v_t", "v_x", "u", "u_t", "u_x", "u_xx"))
    if mode == "lagrangian":
        ok = v > 1
        r1 = vt - ux
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = ut + params.dpressure(v) * vx - params.mu * (uxx / v - ux * vx / (v * v))
    elif mode == "eulerian":
        ok = np.ones_like(v, dtype=bool)
        r1 = vt + vx * u + v * ux
        r2 = vt * u + v * ut + vx * u * u + 2 * v * u * ux - params.mu * uxx
    else:
        raise ParameterError(f"unknown residual mode {mode!r}")
    r1, r2 = r1[ok], r2[ok]
    j1 = float(np.mean(r1 ** 2)) if len(r1) else 0.0
    j2 = float(np.mean(r2 ** 2)) if len(r2) else 0.0
    return CnsResidualReport(j1, j2, int((~ok).sum()), r1, r2)


def with_mode(params: ShockParams, mode) -> ShockParams:
    return replace(params, velocity_mode=VelocityMode.parse(mode))
