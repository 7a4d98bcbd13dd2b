"""Independent oracles shared by the unit and acceptance tests."""
import numpy as np

from rannlab.features import (Activation, FeatureBank, WeightVector, eval_derivative,
                              total_orders)

SCALAR = {
    Activation.TANH: np.tanh,
    Activation.COS: np.cos,
    Activation.SIGMOID: lambda z: 1 / (1 + np.exp(-z)),
}


def loop_eval(bank, weights, t, x):
    """Scalar double loop, no vectorisation, as a re-summation oracle."""
    x = np.atleast_1d(x)
    f = SCALAR[bank.activation]
    total = 0.0
    for i in range(bank.n):
        z = bank.tau[i] * t + sum(bank.a[i, j] * x[j] for j in range(bank.d)) + bank.b[i]
        total += weights.w[i] * bank.scale * f(z)
        if bank.fourier_pairs:
            total += weights.w[bank.n + i] * bank.scale * f(z - np.pi / 2)
    return total + (weights.bias or 0.0)


def random_bank(rng, activation, d=None, n=None, pairs=False):
    d = d or int(rng.integers(1, 4))
    n = n or int(rng.integers(1, 12))
    bank = FeatureBank(rng.normal(0, 1.5, n), rng.normal(0, 1.5, (n, d)), rng.normal(0, 2, n),
                       activation, float(rng.uniform(0.5, 2)), pairs)
    w = WeightVector(rng.normal(size=bank.n_features), float(rng.normal()))
    return bank, w


def richardson(f, x, h):
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


def max_fd_error(bank, weights, t, x, h=1e-3):
    """Largest batch-relative mismatch between each analytic derivative of
    total order 1..2 and a Richardson difference of the next lower one."""
    worst = 0.0
    for ot, mi in total_orders(bank.d):
        if ot + sum(mi) == 0:
            continue
        if ot > 0:
            lower = (ot - 1, mi)
            fd = richardson(lambda s: eval_derivative(bank, weights, s, x, *lower), t, h)
        else:
            j = next(k for k, v in enumerate(mi) if v > 0)
            low = list(mi)
            low[j] -= 1
            e = np.zeros(bank.d)
            e[j] = 1.0
            fd = richardson(lambda s: eval_derivative(bank, weights, t, x + s * e, 0, low),
                            0.0, h)
        ana = eval_derivative(bank, weights, t, x, ot, mi)
        den = max(np.linalg.norm(ana), 1e-300)
        worst = max(worst, float(np.linalg.norm(ana - fd) / den))
    return worst
