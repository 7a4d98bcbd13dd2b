import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rannlab import pme
from rannlab.features import (FeatureBank, Network, WeightVector, design_matrix,
                              fourier_bank)
from rannlab.regress import RidgeConfig, relative_l2, ridge_fit
from rannlab.sampling import (CollocationSet, GaussianFourier, SamplerSpec,
                              sample_collocation_pme, sample_hidden)

P1 = pme.BarenblattParams(2.0, 1, 1.0, 0.1)


def interior_points(params, n, seed, shell=0.01):
    """Points strictly inside the support, a 1% boundary shell removed."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(params.t0, params.t0 + 1, n)
    d = params.d
    r = params.support_radius(t) * (1 - shell) * rng.uniform(0, 1, n) ** (1 / d)
    u = rng.normal(size=(n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return CollocationSet(t, params.c() + r[:, None] * u)


def test_exponents():
    for d in (1, 2, 3):
        p = pme.BarenblattParams(2.0, d)
        assert p.alpha == pytest.approx(d * p.beta)


def test_far_outside_is_zero_and_domain_error():
    assert pme.barenblatt(P1, 0.5, [1e6])[0] == 0
    with pytest.raises(pme.DomainError):
        pme.barenblatt(P1, 0.0, [0.0])


def test_initial_time_profile():
    x = np.linspace(-1, 1, 11)
    want = np.maximum(1 - P1.kappa * x ** 2 / 0.1 ** (2 * P1.beta), 0) * 0.1 ** -P1.alpha
    assert np.allclose(pme.barenblatt(P1, 0.1, x), want)
    assert np.all(pme.barenblatt(P1, 0.1, x) >= 0)


def test_mass_scaling_in_b_const():
    m1 = pme.barenblatt_mass(P1, 0.5)
    m4 = pme.barenblatt_mass(pme.BarenblattParams(2.0, 1, 4.0, 0.1), 0.5)
    assert m4 / m1 == pytest.approx(8.0, abs=1e-6)


@pytest.mark.parametrize("d", [1, 2])
def test_mass_conserved(d):
    p = pme.BarenblattParams(2.0, d, 0.7, 0.1, (0.5,) * d)
    mass = [pme.barenblatt_mass(p, t) for t in np.linspace(0.1, 1.1, 5)]
    assert max(abs(m / mass[0] - 1) for m in mass) <= 1e-6


@pytest.mark.parametrize("d", [1, 2, 3])
def test_exact_residual_inside_support(d):
    p = pme.BarenblattParams(2.0, d, pme.b_const_for_radius(d, 0.3, 0.1), 0.1, (0.5,) * d)
    rep = pme.pme_residual(pme.BarenblattClosure(p), 2.0, interior_points(p, 1000, d))
    assert rep.max_abs_residual <= 1e-8 * max(1.0, float(pme.barenblatt(p, 0.1, p.c())[0]))
    assert rep.points_inside_support == 1000


def test_non_integer_m_exact_residual():
    p = pme.BarenblattParams(2.5, 1, 1.0, 0.1)
    rep = pme.pme_residual(pme.BarenblattClosure(p), 2.5, interior_points(p, 300, 0))
    assert rep.max_abs_residual <= 1e-8


def test_zero_and_constant_networks_have_zero_residual():
    bank = FeatureBank([1.0, 2.0], [[0.5], [1.0]], [0.0, 1.0])
    pts = sample_collocation_pme(1, 50, (0.1, 1.1), 0)
    for w in (WeightVector([0.0, 0.0], 0.0), WeightVector([0.0, 0.0], 1.7)):
        assert pme.pme_residual(Network(bank, w), 2.0, pts).j_pde == 0


def test_profile_continuous_at_free_boundary():
    t = 0.6
    R = P1.support_radius(t)
    vals = [pme.barenblatt(P1, t, [R * (1 - eps)])[0] for eps in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] <= 1e-6


@given(st.integers(1, 3), st.integers(0, 2 ** 31))
@settings(max_examples=25, deadline=None)
def test_closed_form_derivatives_vs_differences(d, seed):
    p = pme.BarenblattParams(2.0, d, 0.5, 0.1)
    pts = interior_points(p, 5, seed, shell=0.2)
    t, x = pts.t, pts.x
    u, ut, grad, lap = pme.barenblatt_derivatives(p, t, x)
    h = 1e-5
    assert np.allclose(ut, (pme.barenblatt(p, t + h, x) - pme.barenblatt(p, t - h, x)) / (2 * h),
                       rtol=1e-5, atol=1e-6)
    fd_lap = 0
    for j in range(d):
        e = np.zeros(d)
        e[j] = h * 100
        up, um = pme.barenblatt(p, t, x + e), pme.barenblatt(p, t, x - e)
        assert np.allclose(grad[:, j], (up - um) / (2 * e[j]), rtol=1e-4, atol=1e-4)
        fd_lap = fd_lap + (up - 2 * u + um) / e[j] ** 2
    assert np.allclose(lap, fd_lap, rtol=1e-3, atol=1e-3)


def test_training_set_targets():
    c = sample_collocation_pme(1, 20, (0.1, 1.1), 1)
    s = pme.pme_training_set(P1, c)
    assert np.array_equal(s.targets, pme.barenblatt(P1, c.t, c.x))


def test_fitted_residual_falls_with_error():
    p = pme.BarenblattParams(2.0, 1, pme.b_const_for_radius(1, 0.3, 0.1), 0.1, (0.5,))
    ev = sample_collocation_pme(1, 4000, (0.1, 1.1), 99)
    y_ev = pme.barenblatt(p, ev.t, ev.x)
    errs, res = [], []
    for N in (25, 100, 400):
        e_r, j_r = [], []
        for rep in range(3):
            bank = fourier_bank(sample_hidden(SamplerSpec(GaussianFourier(10), 1, 10 * N + rep), N))
            pts = sample_collocation_pme(1, 10 * N, (0.1, 1.1), 20 * N + rep)
            fit = ridge_fit(design_matrix(bank, pts), pme.barenblatt(p, pts.t, pts.x),
                            RidgeConfig(1e-5))
            net = Network(bank, WeightVector(fit.weights[:-1], fit.weights[-1]))
            e_r.append(relative_l2(net(ev.t, ev.x), y_ev))
            j_r.append(pme.pme_residual(net, 2.0, ev).j_pde)
        errs.append(np.mean(e_r))
        res.append(np.mean(j_r))
    assert errs[0] > errs[-1] and res[0] > res[-1]
