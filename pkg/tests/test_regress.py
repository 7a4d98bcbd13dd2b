import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rannlab.features import Network, WeightVector, FeatureBank
from rannlab.regress import (DegenerateReferenceError, RidgeConfig, SingularSystemError,
                             relative_l2, relative_l2_error, ridge_fit, ridge_fit_blocks,
                             solve_normal)
from rannlab.sampling import CollocationSet


def test_scalar_solve():
    r = ridge_fit(np.array([[2.0]]), np.array([4.0]))
    assert r.weights[0] == pytest.approx(2.0) and r.train_mse == pytest.approx(0.0)


def test_huge_lambda_kills_weights():
    rng = np.random.default_rng(0)
    A, y = rng.normal(size=(50, 8)), rng.normal(size=50)
    r = ridge_fit(A, y, RidgeConfig(1e12))
    assert np.linalg.norm(r.weights) <= 1e-9 * np.linalg.norm(A.T @ y)


def test_square_interpolation_matches_dense_solve():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.normal(size=(20, 20)))
    A = Q @ np.diag(np.linspace(1, 3, 20)) @ Q.T
    y = rng.normal(size=20)
    r = ridge_fit(A, y, RidgeConfig(0.0))
    assert r.train_mse <= 1e-16 * (y @ y) / 20
    assert np.allclose(r.weights, np.linalg.solve(A, y), rtol=1e-12)


def test_relative_l2_examples():
    u = np.linspace(1, 2, 30)
    assert relative_l2(u, u) == 0
    assert relative_l2(2 * u, u) == pytest.approx(1.0)
    assert relative_l2(np.ones(100) + 0.01, np.ones(100)) == pytest.approx(0.01)
    with pytest.raises(DegenerateReferenceError):
        relative_l2(u, np.zeros_like(u))


def test_relative_l2_error_callables():
    bank = FeatureBank([0.0], [[0.0]], [0.0])
    net = Network(bank, WeightVector([0.0], 2.0))
    pts = CollocationSet(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    assert relative_l2_error(net, lambda t, x: np.ones_like(t), pts) == pytest.approx(1.0)


def test_singular_system_reports_condition():
    G = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-17]])
    with pytest.raises(SingularSystemError) as err:
        solve_normal(-np.eye(2), np.ones(2), 1, RidgeConfig(0.0, jitter=0.0, max_retries=2))
    assert err.value.condition_estimate >= 1
    # a rank-one Gram is rescued by jitter
    W, res, cond, jit = solve_normal(G, np.ones(2), 1, RidgeConfig(0.0))
    assert jit > 0 and np.isfinite(W).all()


def test_blocks_match_whole():
    rng = np.random.default_rng(3)
    A, y = rng.normal(size=(103, 7)), rng.normal(size=(103, 2))
    whole = ridge_fit(A, y, RidgeConfig(1e-3))
    blocks = ridge_fit_blocks(lambda: ((A[i:i + 20], y[i:i + 20]) for i in range(0, 103, 20)),
                              RidgeConfig(1e-3))
    assert np.allclose(whole.weights, blocks.weights, rtol=1e-12)
    # the Gram-based training error equals the explicit residual mean per column sum
    sse = ((A @ blocks.weights - y) ** 2).sum() / 103
    assert blocks.train_mse == pytest.approx(sse, rel=1e-9)


@given(st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_row_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    A, y = rng.normal(size=(40, 6)), rng.normal(size=40)
    p = rng.permutation(40)
    w1 = ridge_fit(A, y, RidgeConfig(1e-4)).weights
    w2 = ridge_fit(A[p], y[p], RidgeConfig(1e-4)).weights
    assert np.linalg.norm(w1 - w2) <= 1e-10 * np.linalg.norm(w1)


@given(st.integers(0, 2 ** 31))
@settings(max_examples=20, deadline=None)
def test_train_mse_monotone_in_lambda(seed):
    rng = np.random.default_rng(seed)
    A, y = rng.normal(size=(30, 10)), rng.normal(size=30)
    mses = [ridge_fit(A, y, RidgeConfig(lam)).train_mse for lam in np.logspace(-6, 0, 13)]
    assert all(b >= a * (1 - 1e-9) - 1e-15 for a, b in zip(mses, mses[1:]))


@given(st.integers(0, 2 ** 31), st.floats(1e-8, 1e3))
@settings(max_examples=30, deadline=None)
def test_positive_lambda_never_fails(seed, lam):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, 12))  # wide, so the Gram is singular
    r = ridge_fit(A, rng.normal(size=5), RidgeConfig(lam))
    assert np.isfinite(r.weights).all() and r.normal_eq_residual <= 1e-8


def test_config_validation():
    with pytest.raises(ValueError):
        RidgeConfig(-1.0)
    with pytest.raises(ValueError):
        ridge_fit(np.zeros((3, 2)), np.zeros(4))
