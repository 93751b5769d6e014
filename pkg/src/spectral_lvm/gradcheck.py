"""Analytic-versus-finite-difference derivative checks."""

from dataclasses import dataclass, field

import numpy as np

from .objectives import finite_difference_gradient, finite_difference_hessian, relative_error
from .spectral import SpectralState, penalty, penalty_gradient, penalty_hessian, power_spectrum

GRADIENT_TOL = 1e-5
HESSIAN_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    gradient_errors: list = field(default_factory=list)
    hessian_errors: list = field(default_factory=list)

    @property
    def max_gradient_error(self):
        return max(self.gradient_errors, default=0.0)

    @property
    def max_hessian_error(self):
        return max(self.hessian_errors, default=0.0)

    def passed(self, gradient_tol=GRADIENT_TOL, hessian_tol=HESSIAN_TOL):
        return self.max_gradient_error <= gradient_tol and self.max_hessian_error <= hessian_tol


def random_unit_vectors(n, count, rng):
    V = rng.standard_normal((count, n))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def synthetic_data(rows, cols, rng):
    """Centered, heavy-tailed test data (non-Gaussian so negentropy is informative)."""
    X = rng.laplace(size=(rows, cols)) + 0.5 * rng.standard_normal((rows, cols))
    return X - X.mean(axis=0)


def check_objective(objective, X, points):
    """Compare an objective's derivatives with finite differences of its value."""
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    result = CheckResult(objective.name)
    f = lambda Ws: objective.value_batch(Ws, X)
    for w in points:
        g_fd = finite_difference_gradient(f, w, objective.fd_gradient_step, batched=True)
        H_fd = finite_difference_hessian(f, w, objective.fd_hessian_step, batched=True)
        result.gradient_errors.append(relative_error(objective.gradient(w, X), g_fd))
        result.hessian_errors.append(relative_error(objective.hessian(w, X), H_fd))
    return result


def check_penalty(state, points):
    result = CheckResult(f"spectral penalty ({len(state)} priors)")
    f = lambda w: penalty(w, state)
    for w in points:
        g_fd = finite_difference_gradient(f, w)
        H_fd = finite_difference_hessian(f, w)
        result.gradient_errors.append(relative_error(penalty_gradient(w, state), g_fd))
        result.hessian_errors.append(relative_error(penalty_hessian(w, state), H_fd))
    return result


def random_state(n, n_priors, rng, alpha=1.0):
    priors = tuple(power_spectrum(v) for v in random_unit_vectors(n, n_priors, rng))
    return SpectralState(priors, alpha)
