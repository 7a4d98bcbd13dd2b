import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rannlab import harness, pme
from rannlab.harness import (Cell, InsufficientDataError, PmeProblem, SweepConfig, aggregate,
                             fit_loglog_slope, read_summary_csv, run_sweep, write_raw_csv,
                             write_summary_csv)
from rannlab.regress import RidgeConfig
from rannlab.ridgelet import make_psi_spec
from rannlab.sampling import derive_seed

PARAMS = pme.BarenblattParams(2.0, 1, pme.b_const_for_radius(1, 0.3, 0.1), 0.1, (0.5,))


def small_cfg(**kw):
    base = dict(widths=(10, 20, 40), problem=PmeProblem(PARAMS), repeats=2, m_factor=10,
                ridge=RidgeConfig(1e-5), std=10.0, eval_points=2000, seed=3)
    base.update(kw)
    return SweepConfig(**base)


def test_exact_power_laws():
    N = np.array([10, 20, 40, 80])
    assert fit_loglog_slope(N, 3.0 * N ** -0.5).slope == pytest.approx(-0.5, abs=1e-12)
    assert fit_loglog_slope(N, 2.0 / N).slope == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(InsufficientDataError):
        fit_loglog_slope(N[:2], N[:2] ** -0.5)


@given(st.floats(-2, 0), st.floats(0.01, 100))
@settings(max_examples=30, deadline=None)
def test_slope_recovers_any_power(p, c):
    N = np.array([25, 50, 100, 200, 400])
    f = fit_loglog_slope(N, c * N ** p)
    assert f.slope == pytest.approx(p, abs=1e-9) and f.ci[0] <= f.slope <= f.ci[1]


def test_single_cell_sweep_has_no_slope():
    res = run_sweep(small_cfg(widths=(10,), repeats=1))
    assert res.slope is None and len(res.cells) == 1


def test_sweep_deterministic_csv(tmp_path):
    paths = []
    for k in range(2):
        res = run_sweep(small_cfg())
        p = tmp_path / f"raw{k}.csv"
        write_raw_csv(res, p)
        write_summary_csv(res, tmp_path / f"sum{k}.csv")
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert (tmp_path / "sum0.csv").read_bytes() == (tmp_path / "sum1.csv").read_bytes()


def test_threads_do_not_change_results():
    a = run_sweep(small_cfg())
    b = run_sweep(small_cfg(threads=3))
    assert [c.rel_l2 for c in a.cells] == [c.rel_l2 for c in b.cells]


def test_eval_set_independent_of_training():
    cfg = small_cfg()
    ev, _ = harness.eval_set(cfg)
    seed = harness.cell_seed(cfg.seed, 10, 0)
    train = cfg.problem.points(100, np.random.SeedSequence(seed, spawn_key=(1,)))
    assert not np.isin(ev.t, train.t).any()
    assert harness.cell_seed(3, 10, 0) != harness.cell_seed(3, 10, 1)
    assert derive_seed(3, "eval").spawn_key != derive_seed(3, "repeat", 10, 0).spawn_key


def test_std_is_sample_std_and_exclusions_counted(tmp_path):
    cells = [Cell(10, 0, 1, 0.1), Cell(10, 1, 2, 0.3), Cell(20, 0, 3, excluded=True),
             Cell(20, 1, 4, 0.05), Cell(40, 0, 5, 0.02), Cell(40, 1, 6, 0.04)]
    res = aggregate(cells, (10, 20, 40))
    assert res.std_rel_l2[0] == pytest.approx(np.std([0.1, 0.3], ddof=1))
    assert res.excluded.tolist() == [0, 1, 0]
    write_summary_csv(res, tmp_path / "s.csv")
    widths, means, slope = read_summary_csv(tmp_path / "s.csv")
    assert widths == [10, 20, 40] and slope == pytest.approx(res.slope)
    text = (tmp_path / "s.csv").read_text().splitlines()
    assert text[0].startswith("width,mean_rel_l2,std_rel_l2,excluded")
    assert text[2].endswith(",1") and text[-2].startswith("slope,ci_lo,ci_hi")


class ZeroProblem:
    """Targets vanish identically, so every relative error is undefined."""
    d = 1

    def points(self, n, seed):
        return PmeProblem(PARAMS).points(n, seed)

    def targets(self, pts):
        return np.zeros(len(pts))


def test_failed_cells_are_excluded_not_dropped():
    res = run_sweep(small_cfg(problem=ZeroProblem()))
    assert all(c.excluded and "Degenerate" in c.error for c in res.cells)
    assert res.excluded.tolist() == [2, 2, 2] and math.isnan(res.mean_rel_l2[0])
    assert res.fit is None


def test_envelope_of_exact_sqrt_law():
    N = (10, 20, 40)
    m = 0.2 / np.sqrt(N)
    res = harness.SweepResult([], N, m, np.zeros(3), np.zeros(3))
    C, ratio = res.envelope()
    assert C == pytest.approx(0.2) and np.allclose(ratio, 1)


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        small_cfg(widths=(20, 10))
    with pytest.raises(ValueError):
        small_cfg(repeats=0)


def test_theory_report():
    spec = make_psi_spec(None, normalized=False)
    r1 = harness.theory_coefficient_report(spec, T=1.0)
    r2 = harness.theory_coefficient_report(spec, T=2.0)
    assert r1["C_Omega"] == 1.0 and r1["derivative_terms"] == 1
    # T enters L_psi only through (1 + 4T + 4R) and the T |D| factor
    assert r2["M_psi"] / r1["M_psi"] == pytest.approx(2 * r2["L_psi"] / r1["L_psi"])
    assert harness.derivative_terms(1, 1, 1) == 4
    with pytest.raises(ValueError):
        harness.theory_coefficient_report(spec, p=1)


def test_write_rows_csv(tmp_path):
    harness.write_rows_csv([{"a": 1, "b": 0.5, "c": "x", "d": True}], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == ["a,b,c,d", "1,0.5,x,1"]
