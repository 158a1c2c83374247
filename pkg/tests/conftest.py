import numpy as np
import pytest

from picardopt.problems import Problem

# Independently coded naive update formulas: the second route for the
# update-rule unit tests.  These must never call picardopt.kernels.


def naive_sgd(values, grad, eta):
    return values - eta * grad


def naive_euler(values, drift, total_steps):
    return values + drift / total_steps


def naive_adam(values, m1, m2, grad, t_prev, beta1, beta2, eps, eta):
    t = t_prev + 1
    m1n = beta1 * m1 + (1 - beta1) * grad
    m2n = beta2 * m2 + (1 - beta2) * grad * grad
    m1h = m1n / (1 - beta1**t)
    m2h = m2n / (1 - beta2**t)
    return values - eta * m1h / (np.sqrt(m2h) + eps), m1n, m2n, t


class DecayOde(Problem):
    """f(x, u) = -x with theta0 = 1...: the hand-checkable Picard testbed."""

    kind = "decay_ode"

    def __init__(self, dim=1, data_seed=0, noise=0.0):
        super().__init__(dim, data_seed, noise)

    def ode_drift(self, values, u):
        return -self._check(values)

    def _base_loss(self, v):
        return 0.5 * float(np.dot(v, v))

    def _base_grad(self, v):
        return v.copy()

    def initial_values(self):
        return np.ones(self.dim)


@pytest.fixture
def decay_ode():
    return DecayOde()
