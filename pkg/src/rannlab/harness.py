"""Width sweeps, log-log slope fits and result tables."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import cns, pme
from . import ridgelet as rg
from .features import Activation, SUP_BOUNDS, design_matrix, evaluate, fourier_bank
from .regress import RidgeConfig, ridge_fit_blocks, relative_l2
from .ridgelet import PsiSpec, l_psi
from .sampling import (GaussianFourier, HeavyTailPi, SamplerSpec, derive_seed,
                       normalization_constant, sample_collocation_pme,
                       sample_collocation_shock, sample_hidden)

BLOCK_ROWS = 20000


class InsufficientDataError(ValueError):
    pass


# ---------------------------------------------------------------- problems

@dataclass(frozen=True)
class PmeProblem:
    params: pme.BarenblattParams
    T: float = 1.0

    @property
    def d(self) -> int:
        return self.params.d

    def points(self, n: int, seed):
        p = self.params
        return sample_collocation_pme(p.d, n, (p.t0, p.t0 + self.T), seed)

    def targets(self, pts) -> np.ndarray:
        return pme.barenblatt(self.params, pts.t, pts.x)


class CnsProblem:
    """Travelling wave targets (v, u) on (0, t_max) x x_range."""

    def __init__(self, params: cns.ShockParams, t_max: float = 1.0, x_range=(-5.0, 5.0)):
        self.params, self.t_max, self.x_range = params, float(t_max), tuple(x_range)
        self.profile = cns.integrate_wave(params)
        self.d = 1

    def shock_center(self, t):
        # the profile is pinned at xi = 0, so the shock sits at x = s t
        return self.params.s * np.asarray(t)

    def points(self, n: int, seed):
        return sample_collocation_shock(n, self.t_max, self.shock_center, seed, self.x_range)

    def targets(self, pts) -> np.ndarray:
        v, u = cns.wave_to_spacetime(self.profile, self.params, pts.t, pts.x[:, 0])
        return np.column_stack([v, u])


# ---------------------------------------------------------------- config / results

@dataclass(frozen=True)
class SweepConfig:
    widths: Tuple[int, ...]
    problem: object
    repeats: int = 5
    m_factor: int = 10
    ridge: RidgeConfig = RidgeConfig(1e-5)
    std: float = 10.0
    eval_points: int = 20000
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        w = tuple(int(v) for v in self.widths)
        if not w or any(v < 1 for v in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("widths must be positive and strictly increasing")
        if self.repeats < 1 or self.m_factor < 1 or self.eval_points < 1:
            raise ValueError("repeats, m_factor and eval_points must be >= 1")
        object.__setattr__(self, "widths", w)


@dataclass
class Cell:
    width: int
    repeat: int
    seed: int
    rel_l2: float = math.nan
    train_mse: float = math.nan
    cond_est: float = math.nan
    normal_eq_residual: float = math.nan
    excluded: bool = False
    error: str = ""


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    ci: Tuple[float, float]


@dataclass
class SweepResult:
    cells: List[Cell]
    widths: Tuple[int, ...]
    mean_rel_l2: np.ndarray
    std_rel_l2: np.ndarray
    excluded: np.ndarray
    fit: Optional[SlopeFit] = None

    @property
    def slope(self) -> Optional[float]:
        return None if self.fit is None else self.fit.slope

    def envelope(self) -> Tuple[float, np.ndarray]:
        """C of the C/sqrt(N) line through the means (geometric fit) and the
        ratio mean / (C/sqrt(N)) per width."""
        N = np.asarray(self.widths, dtype=float)
        C = float(np.exp(np.mean(np.log(self.mean_rel_l2) + 0.5 * np.log(N))))
        return C, self.mean_rel_l2 / (C / np.sqrt(N))


# ---------------------------------------------------------------- sweep

def cell_seed(master: int, width: int, repeat: int) -> int:
    return int(derive_seed(master, "repeat", width, repeat).generate_state(1, np.uint64)[0])


def eval_set(cfg: SweepConfig):
    pts = cfg.problem.points(cfg.eval_points, derive_seed(cfg.seed, "eval"))
    return pts, cfg.problem.targets(pts)


def _rows(bank, pts, y):
    for i in range(0, len(pts), BLOCK_ROWS):
        A = design_matrix(bank, pts.t[i:i + BLOCK_ROWS], pts.x[i:i + BLOCK_ROWS])
        yield A, y[i:i + BLOCK_ROWS]


def run_cell(cfg: SweepConfig, width: int, repeat: int, ev) -> Cell:
    seed = cell_seed(cfg.seed, width, repeat)
    cell = Cell(width, repeat, seed)
    try:
        spec = SamplerSpec(GaussianFourier(cfg.std), cfg.problem.d,
                           np.random.SeedSequence(seed, spawn_key=(0,)))
        bank = fourier_bank(sample_hidden(spec, width))
        pts = cfg.problem.points(cfg.m_factor * width, np.random.SeedSequence(seed, spawn_key=(1,)))
        y = cfg.problem.targets(pts)
        rep = ridge_fit_blocks(lambda: _rows(bank, pts, y), cfg.ridge)
        ev_pts, ev_y = ev
        pred = np.concatenate([A @ rep.weights for A, _ in _rows(bank, ev_pts, ev_y)])
        cell.rel_l2 = relative_l2(pred, ev_y)
        cell.train_mse = rep.train_mse
        cell.cond_est = rep.condition_estimate
        cell.normal_eq_residual = rep.normal_eq_residual
        if not np.isfinite(cell.rel_l2):
            raise FloatingPointError("non-finite error")
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        cell.excluded, cell.error = True, f"{type(exc).__name__}: {exc}"
    return cell


def run_sweep(cfg: SweepConfig) -> SweepResult:
    ev = eval_set(cfg)
    jobs = [(w, r) for w in cfg.widths for r in range(cfg.repeats)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            cells = list(pool.map(lambda job: run_cell(cfg, *job, ev), jobs))
    else:
        cells = [run_cell(cfg, w, r, ev) for w, r in jobs]
    return aggregate(cells, cfg.widths)


def aggregate(cells: Sequence[Cell], widths: Sequence[int]) -> SweepResult:
    means, stds, excl = [], [], []
    for w in widths:
        errs = np.array([c.rel_l2 for c in cells if c.width == w and not c.excluded])
        excl.append(sum(1 for c in cells if c.width == w and c.excluded))
        means.append(errs.mean() if len(errs) else math.nan)
        stds.append(errs.std(ddof=1) if len(errs) > 1 else 0.0 if len(errs) else math.nan)
    res = SweepResult(list(cells), tuple(widths), np.array(means), np.array(stds),
                      np.array(excl))
    ok = np.isfinite(res.mean_rel_l2)
    if ok.sum() >= 3:
        res.fit = fit_loglog_slope(np.asarray(widths)[ok], res.mean_rel_l2[ok])
    return res


def fit_loglog_slope(widths, means, level: float = 0.95) -> SlopeFit:
    """Least squares line through (log N, log mean) with a t-based CI."""
    x = np.log(np.asarray(widths, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    if len(x) < 3:
        raise InsufficientDataError("a slope fit needs at least 3 widths")
    lr = stats.linregress(x, y)
    half = stats.t.ppf(0.5 + level / 2, len(x) - 2) * lr.stderr
    return SlopeFit(float(lr.slope), float(lr.intercept),
                    (float(lr.slope - half), float(lr.slope + half)))


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def write_raw_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["width", "repeat", "seed", "rel_l2", "train_mse", "cond_est", "excluded",
                    "normal_eq_residual"])
        for c in result.cells:
            w.writerow([c.width, c.repeat, c.seed, _fmt(c.rel_l2), _fmt(c.train_mse),
                        _fmt(c.cond_est), int(c.excluded), _fmt(c.normal_eq_residual)])


def write_summary_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["width", "mean_rel_l2", "std_rel_l2", "excluded"])
        for N, m, s, e in zip(result.widths, result.mean_rel_l2, result.std_rel_l2,
                              result.excluded):
            w.writerow([N, _fmt(m), _fmt(s), int(e)])
        fit = result.fit
        w.writerow(["slope", "ci_lo", "ci_hi", ""])
        w.writerow([_fmt(None if fit is None else fit.slope),
                    _fmt(None if fit is None else fit.ci[0]),
                    _fmt(None if fit is None else fit.ci[1]), ""])


def read_summary_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = rows[1:-2]
    widths = [int(r[0]) for r in data]
    means = np.array([float(r[1]) for r in data])
    slope = rows[-1][0]
    return widths, means, (float(slope) if slope else None)


# ---------------------------------------------------------------- theory

def derivative_terms(p: int, q: int, d: int) -> int:
    """Number of (l, beta) with l <= p and |beta| <= q summed in the bound."""
    return (p + 1) * math.comb(q + d, d)


def theory_coefficient_report(psi_spec: PsiSpec, T: float = 1.0, R: float = 1.0,
                              domain_measure: float = 1.0, p: int = 0, q: int = 0,
                              pi_kind: HeavyTailPi = HeavyTailPi(),
                              activation: Activation = Activation.TANH) -> dict:
    """Constants of the Monte Carlo bound, reported for display only."""
    if p or q:
        raise ValueError("the report covers the p = q = 0 regime only")
    d = psi_spec.d
    c_pi = normalization_constant(pi_kind.lambda_tau, pi_kind.lambda_a, d)
    L = l_psi(psi_spec, p, q, T, R)
    sig = SUP_BOUNDS[Activation.parse(activation)][p + q] ** 2
    terms = derivative_terms(p, q, d)
    m_psi = 1.0 * c_pi * sig * T * domain_measure * terms * L
    return {"C_Omega": 1.0, "C_pi": c_pi, "L_psi": L, "T_times_D": T * domain_measure,
            "sigma_sup_sq": sig, "derivative_terms": terms, "M_psi": m_psi,
            "psi_n": psi_spec.n, "M_exponent": (2 * p + 2 * q + d + 3) / 2}


# ---------------------------------------------------------------- ridgelet checks

RECON_GRID = 41
ESTIMATOR_POINTS = np.array([[0.0, 0.0], [0.1, 0.2], [-0.2, 0.1], [0.3, -0.3], [0.15, 0.0],
                             [0.0, -0.25], [-0.1, -0.1], [0.4, 0.1], [-0.35, 0.2],
                             [0.05, 0.35]])
SLICE_NODES = tuple((t, a) for t in (-3.0, -1.5, 0.0, 1.5, 3.0)
                    for a in (-3.0, -1.5, 0.0, 1.5, 3.0))


@dataclass
class ReconstructionCheck:
    grid: object
    rel_l2: float
    warnings: List[str]
    mesh: Tuple[np.ndarray, np.ndarray]
    exact: np.ndarray
    approx: np.ndarray


def reconstruction_check(c: float = 0.08, n: int = 3, grid=None, box=None) -> ReconstructionCheck:
    """Forward transform of a Gaussian bump followed by the dual sum, scored
    on a uniform mesh of the box."""
    box = box or rg.Box()
    grid = grid or rg.FieldGrid()
    spec = rg.make_psi_spec(n)
    u = rg.gaussian_bump(c, box.center)
    field = rg.ridgelet_forward(u, box, spec, grid)
    T, X = np.meshgrid(np.linspace(*box.t, RECON_GRID), np.linspace(*box.x, RECON_GRID),
                       indexing="ij")
    exact = u(T, X)
    approx = rg.ridgelet_reconstruct(field, spec, T.ravel(), X.ravel()).reshape(T.shape)
    return ReconstructionCheck(grid, relative_l2(approx, exact), list(field.warnings),
                               (T, X), exact, approx)


def slice_check(n: int = 3, nodes=SLICE_NODES) -> List[dict]:
    box = rg.Box((-2.0, 2.0), (-2.0, 2.0))
    spec = rg.make_psi_spec(n)
    rows = []
    for k, (c, ctr) in enumerate(rg.parseval_battery()):
        err = rg.fourier_slice_error(rg.gaussian_bump(c, ctr), box, spec, nodes)
        rows.append({"function": k, "width": c, "center_t": ctr[0], "center_x": ctr[1],
                     "rel_error": err})
    return rows


def parseval_check(orders=(0, 1)) -> List[dict]:
    """Parseval-type bound for the battery with the unnormalised profile of
    the smallest admissible order."""
    rows = []
    for p in orders:
        spec = rg.make_psi_spec(None, p=p, q=p, normalized=False)
        for k, (c, ctr) in enumerate(rg.parseval_battery()):
            r = rg.parseval_diagnostic(rg.gaussian_bump(c, ctr), 1.0, 1.0, p, p, spec)
            rows.append({"function": k, "p": p, "q": p, "psi_n": r.n, "lhs": r.lhs,
                         "bound": r.bound, "ratio": r.lhs / r.bound,
                         "tail_fraction": r.tail_fraction, "tail_warning": r.tail_warning,
                         "holds": r.holds})
    return rows


@dataclass
class EstimatorCheck:
    points: np.ndarray
    reference: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    var_small: np.ndarray
    var_large: np.ndarray
    widths: Tuple[int, int]
    seeds: int

    @property
    def z(self) -> np.ndarray:
        return (self.mean - self.reference) / self.stderr

    @property
    def ratio(self) -> np.ndarray:
        return self.var_small / self.var_large


def estimator_samples(u, box, spec, evaluator, N: int, seeds: int, master: int,
                      points=ESTIMATOR_POINTS) -> np.ndarray:
    out = np.empty((seeds, len(points)))
    for k in range(seeds):
        bank, w = rg.build_unbiased_estimator(u, box, spec, HeavyTailPi(), N,
                                              derive_seed(master, "estimator", N, k),
                                              evaluator=evaluator)
        out[k] = evaluate(bank, w, points[:, 0], points[:, 1])
    return out


def estimator_check(seeds: int = 2000, widths=(64, 256), seed: int = 0, c: float = 0.08,
                    n: int = 3) -> EstimatorCheck:
    """Monte Carlo mean and variance of the heavy-tailed estimator at fixed
    points, against the quadrature reconstruction of the same target."""
    box = rg.Box()
    spec = rg.make_psi_spec(n)
    u = rg.cutoff_bump(c, box)
    ev = rg.RadonTransformEvaluator(u, box, spec)
    pts = ESTIMATOR_POINTS
    ref = rg.ridgelet_reconstruct(rg.ridgelet_forward(u, box, spec), spec, pts[:, 0], pts[:, 1])
    small = estimator_samples(u, box, spec, ev, widths[0], seeds, seed)
    large = estimator_samples(u, box, spec, ev, widths[1], seeds, seed)
    return EstimatorCheck(pts, ref, small.mean(0), small.std(0, ddof=1) / np.sqrt(seeds),
                          small.var(0, ddof=1), large.var(0, ddof=1), tuple(widths), seeds)


def write_rows_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r.values()])
