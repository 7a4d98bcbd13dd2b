"""Ridgelet transform machinery in one space dimension (parameters (tau, a, b)).

Profiles are Gaussian derivatives.  With k = d + 2n + 1 + beta,

    psi_hat(w) = sqrt(2 pi) i^k w^beta |w|^(d+2n+1) exp(-w^2/2) / K_norm,

where beta = 1 pairs with the odd transforms of tanh and sigmoid and beta = 0
with the even delta pair of cos.  For d = 1 this is psi = G^(k) / K_norm with
G(z) = exp(-z^2/2), i.e. (-1)^k He_k(z) G(z) / K_norm.

Fourier convention: f_hat(w) = int f(z) exp(-i w z) dz.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numba as nb
import numpy as np
from numpy.polynomial import hermite_e
from scipy import integrate

from .features import Activation, FeatureBank, WeightVector, sigma
from .sampling import (HeavyTailPi, HiddenSamples, ParameterError, SamplerSpec,
                       pi_density, sample_hidden)

SQRT2PI = np.sqrt(2 * np.pi)


class AdmissibilityError(RuntimeError):
    pass


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class PsiSpec:
    n: int = 0
    d: int = 1
    K_norm: float = 1.0
    activation: Activation = Activation.TANH

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation.parse(self.activation))
        if int(self.n) < 0 or int(self.d) < 1:
            raise ParameterError("need n >= 0 and d >= 1")
        if not np.isfinite(self.K_norm) or self.K_norm == 0:
            raise ParameterError("K_norm must be finite and nonzero")

    @property
    def beta(self) -> int:
        return 0 if self.activation is Activation.COS else 1

    @property
    def order(self) -> int:
        return self.d + 2 * self.n + 1 + self.beta


def default_n(p: int, q: int, d: int = 1) -> int:
    """Smallest n with d + 2n + 2 > M, M = (2p + 2q + d + 3)/2."""
    M = (2 * p + 2 * q + d + 3) / 2
    n = 0
    while d + 2 * n + 2 <= M:
        n += 1
    return n


def psi_hat(spec: PsiSpec, omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    mag = np.abs(w) ** (spec.d + 2 * spec.n + 1) * np.exp(-0.5 * w * w)
    if spec.beta:
        mag = w * mag
    return SQRT2PI * (1j) ** spec.order * mag / spec.K_norm


@lru_cache(maxsize=32)
def _hermite_coeffs(k: int) -> np.ndarray:
    # power-basis coefficients of (-1)^k He_k, highest degree first
    c = hermite_e.herme2poly([0] * k + [1]) * (-1) ** k
    return np.ascontiguousarray(c[::-1])


def psi(spec: PsiSpec, z) -> np.ndarray:
    """Physical-space profile (d = 1 closed form)."""
    if spec.d != 1:
        raise ParameterError("physical profile is implemented for d = 1")
    z = np.asarray(z, dtype=float)
    return np.polyval(_hermite_coeffs(spec.order), z) * np.exp(-0.5 * z * z) / spec.K_norm


def psi_derivative(spec: PsiSpec, z) -> np.ndarray:
    k = spec.order + 1
    z = np.asarray(z, dtype=float)
    return np.polyval(_hermite_coeffs(k), z) * np.exp(-0.5 * z * z) / spec.K_norm


def psi_table(spec: PsiSpec, half_width: float = 30.0, step: float = 1 / 256,
              omega_max: float = 40.0, nodes: int = 400) -> Tuple[np.ndarray, np.ndarray]:
    """psi on a uniform grid by Gauss-Legendre inverse Fourier quadrature.

    psi(z) = (1/pi) Re int_0^inf psi_hat(w) exp(i w z) dw.
    """
    z = np.arange(-half_width, half_width + step / 2, step)
    g, gw = np.polynomial.legendre.leggauss(nodes)
    w = 0.5 * omega_max * (g + 1)
    gw = 0.5 * omega_max * gw
    ph = psi_hat(spec, w) * gw
    vals = np.empty_like(z)
    for i in range(0, len(z), 2048):
        zz = z[i:i + 2048]
        vals[i:i + 2048] = (np.exp(1j * np.outer(zz, w)) @ ph).real / np.pi
    return z, vals


def psi_norms(spec: PsiSpec, omega_max: float = 60.0) -> Tuple[float, float]:
    """(||psi||_L2, ||psi'||_L2^2) by Plancherel, (1/2pi) int |psi_hat|^2."""
    f0 = lambda w: np.abs(psi_hat(spec, w)) ** 2
    f1 = lambda w: w * w * np.abs(psi_hat(spec, w)) ** 2
    n0 = 2 * integrate.quad(f0, 0, omega_max, epsabs=0, epsrel=1e-12, limit=200)[0]
    n1 = 2 * integrate.quad(f1, 0, omega_max, epsabs=0, epsrel=1e-12, limit=200)[0]
    return float(np.sqrt(n0 / (2 * np.pi))), float(n1 / (2 * np.pi))


def sigma_hat(activation: Activation, omega) -> np.ndarray:
    """Closed-form transform of sigma away from w = 0 (cos is a delta pair)."""
    w = np.asarray(omega, dtype=float)
    if activation is Activation.COS:
        raise ParameterError("cos has a delta-pair transform; use the symbolic path")
    c = np.pi / 2 if activation is Activation.TANH else np.pi
    with np.errstate(over="ignore"):
        return -1j * np.pi / np.sinh(c * w)


def coupling_constant(spec: PsiSpec, omega_max: float = 40.0, rule: str = "quad") -> float:
    """K = (2 pi)^(D-1) int conj(psi_hat) sigma_hat |w|^-D dw with D = d + 1.

    ``rule`` selects adaptive Gauss-Kronrod ("quad") or a fixed composite
    Gauss-Legendre rule ("gl"), the second serving as an independent check.
    """
    D = spec.d + 1
    pre = (2 * np.pi) ** (D - 1)
    if spec.activation is Activation.COS:
        # sigma_hat = pi (delta(w-1) + delta(w+1))
        return float((pre * np.pi * np.conj(psi_hat(spec, np.array([1.0, -1.0]))).sum()).real)

    def integrand(w, part):
        val = np.conj(psi_hat(spec, w)) * sigma_hat(spec.activation, w) / np.abs(w) ** D
        return val.real if part == "re" else val.imag

    if rule == "quad":
        re = integrate.quad(integrand, 0, omega_max, args=("re",), epsabs=0,
                            epsrel=1e-13, limit=400)
        im = integrate.quad(integrand, 0, omega_max, args=("im",), epsabs=1e-14, limit=400)
        if re[1] > 1e-9 * max(abs(re[0]), 1e-300):
            raise AdmissibilityError(f"coupling quadrature did not converge (err {re[1]})")
        val_re, val_im = re[0], im[0]
    else:
        g, gw = np.polynomial.legendre.leggauss(64)
        edges = np.linspace(0, omega_max, 81)
        val_re = val_im = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            w = 0.5 * (hi - lo) * (g + 1) + lo
            ww = 0.5 * (hi - lo) * gw
            val_re += (integrand(w, "re") * ww).sum()
            val_im += (integrand(w, "im") * ww).sum()
    if abs(val_im) > 1e-8 * abs(val_re):
        raise AdmissibilityError("coupling constant has a non-vanishing imaginary part")
    # even integrand: the negative half-line doubles the value
    return float(pre * 2 * val_re)


def normalize_pair(spec: PsiSpec) -> PsiSpec:
    """Rescale psi so that K_{psi, sigma} = 1."""
    raw = replace(spec, K_norm=1.0)
    K = coupling_constant(raw)
    if not np.isfinite(K) or abs(K) < 1e-300:
        raise AdmissibilityError(f"pair is not admissible (K = {K})")
    return replace(spec, K_norm=K)


def make_psi_spec(n: Optional[int] = None, activation=Activation.TANH, p: int = 0,
                  q: int = 0, d: int = 1, normalized: bool = True) -> PsiSpec:
    if n is None:
        n = default_n(p, q, d)
    spec = PsiSpec(n=int(n), d=d, activation=Activation.parse(activation))
    return normalize_pair(spec) if normalized else spec


def omega_cutoff(spec: PsiSpec, rel: float = 1e-17) -> float:
    """Frequency beyond which |psi_hat| stays below rel * its peak."""
    w = np.arange(0.0, 80.0, 0.01)
    a = np.abs(psi_hat(spec, w))
    peak = a.argmax()
    small = np.nonzero(a[peak:] < rel * a[peak])[0]
    return float(w[peak + small[0]]) if len(small) else 80.0


# ---------------------------------------------------------------- fields

@dataclass(frozen=True)
class Box:
    t: Tuple[float, float] = (-1.0, 1.0)
    x: Tuple[float, float] = (-1.0, 1.0)

    @property
    def center(self) -> Tuple[float, float]:
        return 0.5 * (self.t[0] + self.t[1]), 0.5 * (self.x[0] + self.x[1])

    @property
    def radius(self) -> float:
        return 0.5 * float(np.hypot(self.t[1] - self.t[0], self.x[1] - self.x[0]))

    def contains(self, t, x):
        return (t >= self.t[0]) & (t <= self.t[1]) & (x >= self.x[0]) & (x <= self.x[1])

    def gauss_legendre(self, nodes: int = 96):
        """Tensor nodes (t_i, x_j) and the weight matrix w_i w_j."""
        g, gw = np.polynomial.legendre.leggauss(nodes)
        ht, hx = 0.5 * (self.t[1] - self.t[0]), 0.5 * (self.x[1] - self.x[0])
        tg, xg = ht * g + self.center[0], hx * g + self.center[1]
        return tg, xg, np.outer(ht * gw, hx * gw)


@dataclass(frozen=True)
class FieldGrid:
    ta_max: float = 8.0
    h_ta: float = 1 / 8
    b_max: float = 12.0
    h_b: float = 1 / 16

    def axes(self):
        ta = np.arange(-self.ta_max, self.ta_max + self.h_ta / 2, self.h_ta)
        b = np.arange(-self.b_max, self.b_max + self.h_b / 2, self.h_b)
        return ta, b

    def refined(self, factor: int = 2) -> "FieldGrid":
        return FieldGrid(self.ta_max, self.h_ta / factor, self.b_max, self.h_b / factor)


@dataclass
class RidgeletField:
    tau: np.ndarray
    a: np.ndarray
    b: np.ndarray
    values: np.ndarray          # indexed [tau, a, b]
    warnings: list = field(default_factory=list)

    @property
    def steps(self):
        return self.tau[1] - self.tau[0], self.a[1] - self.a[0], self.b[1] - self.b[0]

    def to_bytes(self) -> bytes:
        head = struct.pack("<8sIIII6d", b"RIDGEFLD", 1, len(self.tau), len(self.a),
                           len(self.b), self.tau[0], self.steps[0], self.a[0], self.steps[1],
                           self.b[0], self.steps[2])
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RidgeletField":
        fmt = "<8sIIII6d"
        off = struct.calcsize(fmt)
        magic, ver, nt, na, nb_, t0, ht, a0, ha, b0, hb = struct.unpack(fmt, blob[:off])
        if magic != b"RIDGEFLD" or ver != 1:
            raise ValueError("not a ridgelet field record")
        vals = np.frombuffer(blob, "<f8", nt * na * nb_, off).reshape(nt, na, nb_).copy()
        ax = lambda x0, h, n: x0 + h * np.arange(n)
        return cls(ax(t0, ht, nt), ax(a0, ha, na), ax(b0, hb, nb_), vals)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "RidgeletField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _box_values(u: Callable, box: Box, nodes: int):
    tg, xg, W = box.gauss_legendre(nodes)
    U = np.asarray(u(tg[:, None], xg[None, :]), dtype=float) * W
    return tg, xg, U


def ridgelet_forward(u: Callable, box: Box, spec: PsiSpec, grid: FieldGrid = FieldGrid(),
                     nodes: int = 96, omega_step: float = 0.05,
                     method: str = "spectral") -> RidgeletField:
    """R(tau, a, b) = int_box u(t, x) psi(tau t + a x - b) on the grid nodes.

    The spectral route writes psi(z) as its inverse Fourier integral, so per
    (tau, a) the field is a 1-D transform of the box quadrature of u against
    exp(i w (tau t + a x)).  The direct route sums psi at the quadrature nodes.
    """
    if spec.d != 1:
        raise ParameterError("quadrature transforms are limited to d = 1")
    ta, b = grid.axes()
    tg, xg, U = _box_values(u, box, nodes)
    warnings = []
    wmax = omega_cutoff(spec)
    if grid.h_b * wmax > np.pi:
        warnings.append(f"b step {grid.h_b} under-resolves psi (w_max={wmax:.2f})")
    reach = grid.ta_max * (np.abs(box.t).max() + np.abs(box.x).max()) + grid.b_max + 12
    if method == "spectral" and 2 * np.pi / omega_step < 2 * reach:
        warnings.append("omega step aliases the b axis")
    if method == "direct":
        T, A, B = np.meshgrid(ta, ta, b, indexing="ij")
        vals = transform_direct(U, tg, xg, spec, T.ravel(), A.ravel(), B.ravel())
        return RidgeletField(ta, ta.copy(), b, vals.reshape(T.shape), warnings)
    if method != "spectral":
        raise ParameterError(f"unknown forward method {method!r}")
    w = np.arange(omega_step, wmax + omega_step, omega_step)
    ph = psi_hat(spec, w) * omega_step
    Eb = np.exp(-1j * np.outer(w, b))
    E2 = np.exp(1j * ta[:, None, None] * w[None, :, None] * xg[None, None, :])
    R = np.empty((len(ta), len(ta), len(b)))
    for i, tau in enumerate(ta):
        V = np.exp(1j * tau * np.outer(w, tg)) @ U
        Q = np.einsum("wj,awj->aw", V, E2)
        R[i] = ((Q * ph) @ Eb).real / np.pi
    return RidgeletField(ta, ta.copy(), b, R, warnings)


def transform_direct(U: np.ndarray, tg, xg, spec: PsiSpec, tau, a, b,
                     chunk: int = 512) -> np.ndarray:
    """Box quadrature of u psi(tau t + a x - b) at arbitrary parameter points.

    ``U`` already carries the quadrature weights (see Box.gauss_legendre).
    """
    tau, a, b = (np.asarray(v, dtype=float).reshape(-1) for v in (tau, a, b))
    out = np.empty(len(tau))
    Uf = U.ravel()
    TT = np.repeat(tg, len(xg))
    XX = np.tile(xg, len(tg))
    for s in range(0, len(tau), chunk):
        z = (np.outer(tau[s:s + chunk], TT) + np.outer(a[s:s + chunk], XX)
             - b[s:s + chunk, None])
        out[s:s + chunk] = psi(spec, z) @ Uf
    return out


def ridgelet_transform(u: Callable, box: Box, spec: PsiSpec, tau, a, b,
                       nodes: int = 96) -> np.ndarray:
    tg, xg, U = _box_values(u, box, nodes)
    return transform_direct(U, tg, xg, spec, tau, a, b)


def _catmull_rom(c0, c1, c2, c3, f):
    return c1 + 0.5 * f * (c2 - c0 + f * (2 * c0 - 5 * c1 + 4 * c2 - c3
                                          + f * (3 * (c1 - c2) + c3 - c0)))


def ridgelet_reconstruct(field: RidgeletField, spec: PsiSpec, t, x) -> np.ndarray:
    """Dual quadrature sum_{tau,a,b} R sigma(tau t + a x - b) h_tau h_a h_b.

    Along b the sum is a discrete convolution of R with sigma samples; it is
    done by FFT onto the z-grid z = m h_b and then interpolated at
    z = tau t + a x.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    ht, ha, hb = field.steps
    b0, nb_ = field.b[0], len(field.b)
    zmax = np.abs(field.tau).max() * np.abs(t).max() + np.abs(field.a).max() * np.abs(x).max()
    mlim = int(np.ceil(zmax / hb)) + 3
    m = np.arange(-mlim, mlim + 1)
    k = np.arange(m[0] - (nb_ - 1), m[-1] + 1)
    S = sigma(spec.activation, k * hb - b0) * hb
    nfft = 1 << int(np.ceil(np.log2(len(k) + nb_)))
    FS = np.fft.rfft(S, nfft)
    cols = m - k[0]
    rows = np.arange(len(field.a))[:, None]
    out = np.zeros(len(t))
    for i, tau in enumerate(field.tau):
        full = np.fft.irfft(np.fft.rfft(field.values[i], nfft, axis=-1) * FS, nfft, axis=-1)
        C = full[:, cols]
        pos = (tau * t[None, :] + field.a[:, None] * x[None, :]) / hb - m[0]
        i0 = np.floor(pos).astype(int)
        f = pos - i0
        out += _catmull_rom(C[rows, i0 - 1], C[rows, i0], C[rows, i0 + 1],
                            C[rows, i0 + 2], f).sum(0)
    return out * ht * ha


# ---------------------------------------------------------------- diagnostics

def uhat_box(u: Callable, box: Box, s, xi, nodes: int = 96) -> np.ndarray:
    """u_hat(s, xi) = int_box u exp(-i (s t + xi x)) by tensor Gauss-Legendre."""
    tg, xg, U = _box_values(u, box, nodes)
    s = np.asarray(s, dtype=float)
    xi = np.asarray(xi, dtype=float)
    Et = np.exp(-1j * np.multiply.outer(s, tg))
    Ex = np.exp(-1j * np.multiply.outer(xi, xg))
    return np.einsum("...i,ij,...j->...", Et, U, Ex)


def fourier_slice_error(u: Callable, box: Box, spec: PsiSpec, nodes_ta: Sequence,
                        grid: FieldGrid = FieldGrid(), omega_step: float = 0.05,
                        quad_nodes: int = 96) -> float:
    """Relative L2 mismatch between the b-transform of R(tau, a, .) and
    u_hat(tau w, a w) psi_hat(-w), over the given (tau, a) nodes.

    R is computed by the direct physical-space route on the b grid, so the
    check is independent of the spectral forward route.
    """
    _, b = grid.axes()
    tg, xg, U = _box_values(u, box, quad_nodes)
    w = np.arange(omega_step, omega_cutoff(spec, 1e-12), omega_step)
    Eb = np.exp(-1j * np.outer(w, b)) * grid.h_b
    num = den = 0.0
    for tau, a in nodes_ta:
        R = transform_direct(U, tg, xg, spec, np.full(len(b), tau), np.full(len(b), a), b)
        lhs = Eb @ R
        rhs = uhat_box(u, box, tau * w, a * w, quad_nodes) * psi_hat(spec, -w)
        num += np.sum(np.abs(lhs - rhs) ** 2)
        den += np.sum(np.abs(rhs) ** 2)
    return float(np.sqrt(num / den))


@dataclass
class ParsevalReport:
    lhs: float
    bound: float
    L_psi: float
    sobolev_sq: float
    tail_fraction: float
    tail_warning: bool
    n: int

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound


def sobolev_mixed_sq(u: Callable, box: Box, p: int, q: int, s_max: float = 60.0,
                     npts: int = 481, nodes: int = 96) -> float:
    """(2 pi)^-2 int |u_hat|^2 (1+s^2)^(p+1) (1+xi^2)^(q+1) ds dxi."""
    s = np.linspace(-s_max, s_max, npts)
    h = s[1] - s[0]
    tg, xg, U = _box_values(u, box, nodes)
    uh = np.exp(-1j * np.outer(s, tg)) @ U @ np.exp(-1j * np.outer(xg, s))
    wgt = np.outer((1 + s * s) ** (p + 1), (1 + s * s) ** (q + 1))
    return float((np.abs(uh) ** 2 * wgt).sum() * h * h / (2 * np.pi) ** 2)


def l_psi(spec: PsiSpec, p: int, q: int, T: float, Rr: float) -> float:
    """(4 pi + |psi|)(1 + 4T + 4R) + 4 pi (M+1)^2 + |psi'|^2."""
    M = (2 * p + 2 * q + spec.d + 3) / 2
    n0, n1sq = psi_norms(spec)
    return (4 * np.pi + n0) * (1 + 4 * T + 4 * Rr) + 4 * np.pi * (M + 1) ** 2 + n1sq


def parseval_diagnostic(u: Callable, T: float, Rr: float, p: int, q: int,
                        spec: PsiSpec, grid: FieldGrid = FieldGrid(),
                        field: Optional[RidgeletField] = None,
                        shell: float = 0.9, tail_limit: float = 0.05) -> ParsevalReport:
    """Weighted field energy against L_psi |u|^2_{H^{p+1} H^{q+1}}.

    u is supported in [-2T, 2T] x [-2R, 2R].
    """
    box = Box((-2 * T, 2 * T), (-2 * Rr, 2 * Rr))
    if field is None:
        field = ridgelet_forward(u, box, spec, grid)
    ht, ha, hb = field.steps
    Tt, A, B = field.tau[:, None, None], field.a[None, :, None], field.b[None, None, :]
    dens = field.values ** 2 * (1 + Tt ** 2) ** p * (1 + A ** 2) ** q * (1 + B ** 2)
    lhs = float(dens.sum() * ht * ha * hb)
    outer = ((np.maximum(np.abs(Tt), np.abs(A)) > shell * np.abs(field.tau).max())
             | (np.abs(B) > shell * np.abs(field.b).max()))
    tail = float((dens * outer).sum() * ht * ha * hb / lhs) if lhs > 0 else 0.0
    L = l_psi(spec, p, q, T, Rr)
    sob = sobolev_mixed_sq(u, box, p, q)
    return ParsevalReport(lhs, L * sob, L, sob, tail, tail > tail_limit, spec.n)


# ---------------------------------------------------------------- estimator

def smooth_step(z, inner: float, outer: float) -> np.ndarray:
    """C-infinity plateau: 1 for |z| <= inner, 0 for |z| >= outer."""
    s = np.clip((np.abs(np.asarray(z, dtype=float)) - inner) / (outer - inner), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = lambda y: np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
        a, c = f(1 - s), f(s)
    return a / (a + c)


@nb.njit(cache=True)
def _psi_nb(coef, z):
    acc = 0.0
    for c in coef:
        acc = acc * z + c
    return acc * np.exp(-0.5 * z * z)


@nb.njit(cache=True)
def _cub(p0, p1, p2, p3, f):
    return p1 + 0.5 * f * (p2 - p0 + f * (2 * p0 - 5 * p1 + 4 * p2 - p3
                                          + f * (3 * (p1 - p2) + p3 - p0)))


@nb.njit(cache=True)
def _radon_at(P, ith, rr, rho, hr):
    # bicubic lookup in (theta, r); periodic in theta, zero outside |r| <= rho
    nth, nr = P.shape
    pos = (rr + rho) / hr
    if pos < 1.0 or pos > nr - 3:
        return 0.0
    j = int(pos)
    fr = pos - j
    i = int(np.floor(ith))
    ft = ith - i
    v0 = _cub(P[(i - 1) % nth, j - 1], P[(i - 1) % nth, j], P[(i - 1) % nth, j + 1], P[(i - 1) % nth, j + 2], fr)
    v1 = _cub(P[i % nth, j - 1], P[i % nth, j], P[i % nth, j + 1], P[i % nth, j + 2], fr)
    v2 = _cub(P[(i + 1) % nth, j - 1], P[(i + 1) % nth, j], P[(i + 1) % nth, j + 1], P[(i + 1) % nth, j + 2], fr)
    v3 = _cub(P[(i + 2) % nth, j - 1], P[(i + 2) % nth, j], P[(i + 2) % nth, j + 1], P[(i + 2) % nth, j + 2], fr)
    return _cub(v0, v1, v2, v3, ft)


@nb.njit(cache=True)
def _transform_radon(P, coef, tau, a, b, rho, r, zg, zw, w_switch):
    nth, nr = P.shape
    hr = r[1] - r[0]
    hth = 2 * np.pi / nth
    out = np.empty(len(tau))
    for s in range(len(tau)):
        wn = np.sqrt(tau[s] ** 2 + a[s] ** 2)
        ith = (np.arctan2(a[s], tau[s]) % (2 * np.pi)) / hth
        acc = 0.0
        if wn < w_switch:
            # slowly varying psi(|w| r - b): integrate on the r grid
            i = int(np.floor(ith))
            ft = ith - i
            for j in range(nr):
                wj = hr if 0 < j < nr - 1 else 0.5 * hr
                pv = _cub(P[(i - 1) % nth, j], P[i % nth, j], P[(i + 1) % nth, j],
                          P[(i + 2) % nth, j], ft)
                acc += wj * pv * _psi_nb(coef, wn * r[j] - b[s])
            out[s] = acc
        else:
            # substitute z = |w| r - b and integrate psi on its own nodes
            for q in range(len(zg)):
                rr = (zg[q] + b[s]) / wn
                if rr < -rho or rr > rho:
                    continue
                acc += zw[q] * _radon_at(P, ith, rr, rho, hr) * _psi_nb(coef, zg[q])
            out[s] = acc / wn
    return out


class RadonTransformEvaluator:
    """Pointwise R_psi u(tau, a, b) for arbitrary (heavy-tailed) parameters.

    u is reduced once to its Radon table p(theta, r) about the box centre, then
    R(tau, a, b) = int p(theta, r) psi(|w| r - b') dr with b' = b - w . centre.
    Values below the quadrature noise floor are returned as exact zeros: the
    Monte Carlo weight 1/pi grows polynomially, so unresolved round-off far in
    the tails would otherwise dominate the estimator variance.
    """

    def __init__(self, u: Callable, box: Box, spec: PsiSpec, n_theta: int = 2048,
                 n_r: int = 1025, line_nodes: int = 96, z_nodes: int = 128,
                 z_half: float = 12.0, w_switch: float = 4.0, floor_rel: float = 1e-8):
        if spec.d != 1:
            raise ParameterError("transform evaluator is limited to d = 1")
        self.spec, self.box = spec, box
        self.center = np.array(box.center)
        self.rho = box.radius
        self.r = np.linspace(-self.rho, self.rho, n_r)
        th = np.arange(n_theta) * 2 * np.pi / n_theta
        sg, sw = np.polynomial.legendre.leggauss(line_nodes)
        sg, sw = sg * self.rho, sw * self.rho
        P = np.empty((n_theta, n_r))
        for i, ang in enumerate(th):
            c, s = np.cos(ang), np.sin(ang)
            T = self.center[0] + self.r[:, None] * c - sg[None, :] * s
            X = self.center[1] + self.r[:, None] * s + sg[None, :] * c
            vals = np.where(box.contains(T, X), u(T, X), 0.0)
            P[i] = vals @ sw
        self.P = P
        zg, zw = np.polynomial.legendre.leggauss(z_nodes)
        self.zg, self.zw = zg * z_half, zw * z_half
        self.coef = _hermite_coeffs(spec.order) / spec.K_norm
        self.w_switch = float(w_switch)
        tg, xg, U = _box_values(lambda t, x: np.abs(u(t, x)), box, line_nodes)
        zz = np.linspace(-z_half, z_half, 4001)
        self.floor = floor_rel * float(U.sum()) * float(np.abs(psi(spec, zz)).max())

    def __call__(self, tau, a, b) -> np.ndarray:
        tau, a, b = (np.ascontiguousarray(np.asarray(v, dtype=float).reshape(-1))
                     for v in (tau, a, b))
        bs = b - tau * self.center[0] - a * self.center[1]
        R = _transform_radon(self.P, self.coef, tau, a, bs, self.rho, self.r,
                             self.zg, self.zw, self.w_switch)
        R[np.abs(R) < self.floor] = 0.0
        return R


def build_unbiased_estimator(u: Callable, box: Box, spec: PsiSpec, pi_kind: HeavyTailPi,
                             N: int, seed, evaluator: Optional[RadonTransformEvaluator] = None,
                             hidden: Optional[HiddenSamples] = None
                             ) -> Tuple[FeatureBank, WeightVector]:
    """u_N = sum_i W_i sigma(tau_i t + a_i x - b_i), W_i = R(theta_i) / (N pi(theta_i)).

    The returned bank stores the additive bias -b_i.
    """
    if evaluator is None:
        evaluator = RadonTransformEvaluator(u, box, spec)
    if hidden is None:
        hidden = sample_hidden(SamplerSpec(pi_kind, 1, seed), N)
    tau, a, b = hidden.tau, hidden.a[:, 0], hidden.b
    R = evaluator(tau, a, b)
    W = R / (len(tau) * pi_density(pi_kind, 1, tau, a, b))
    bank = FeatureBank(tau, a[:, None], -b, spec.activation, 1.0, False)
    return bank, WeightVector(W)


def gaussian_bump(c: float = 0.08, center=(0.0, 0.0)) -> Callable:
    ct, cx = center
    return lambda t, x: np.exp(-((t - ct) ** 2 + (x - cx) ** 2) / c)


def cutoff_bump(c: float = 0.08, box: Box = Box(), plateau: float = 0.75) -> Callable:
    """Gaussian bump times a smooth cutoff reaching zero at the box edges."""
    ct, cx = box.center
    ht, hx = 0.5 * (box.t[1] - box.t[0]), 0.5 * (box.x[1] - box.x[0])
    g = gaussian_bump(c, box.center)
    return lambda t, x: (g(t, x) * smooth_step((t - ct) / ht, plateau, 1.0)
                         * smooth_step((x - cx) / hx, plateau, 1.0))


def parseval_battery() -> list:
    """Ten smooth bumps (width, centre) supported well inside [-2, 2]^2."""
    return [(0.15, (0.0, 0.0)), (0.2, (0.0, 0.0)), (0.25, (0.0, 0.0)), (0.3, (0.0, 0.0)),
            (0.15, (0.3, -0.2)), (0.2, (0.3, -0.2)), (0.25, (0.3, -0.2)), (0.3, (0.3, -0.2)),
            (0.2, (-0.25, 0.25)), (0.25, (0.2, 0.3))]
