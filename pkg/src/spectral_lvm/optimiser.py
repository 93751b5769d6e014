"""Deflation fitter: one unit-norm component at a time.

Each component minimises ``L_model(w) + alpha * w^T B w`` on the unit
sphere.  The equality constraint is handled by projection: search
directions live in the tangent space of the sphere (and, with Gram-Schmidt
enabled, in the orthogonal complement of the earlier components), every
accepted step is renormalised, and the Newton model uses the Hessian of the
Lagrangian with the first-order multiplier estimate ``lambda = -w^T g / 2``.

The penalty weight follows a SUMT schedule ``alpha_s = alpha0 * gamma**s``;
each stage warm-starts from the previous stage's solution.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (
    ComponentFitError,
    DegenerateResidualError,
    ObjectiveEvaluationError,
    SingularSystemError,
)
from .spectral import SpectralState, penalty, penalty_gradient, penalty_hessian

logger = logging.getLogger(__name__)

__all__ = [
    "OptimConfig",
    "ComponentDiagnostics",
    "FitDiagnostics",
    "FitResult",
    "fit_component",
    "fit_all",
    "gram_schmidt_step",
    "sample_batch",
    "newton_step",
    "bfgs_update",
]

STRATEGIES = ("steepest_descent", "newton", "bfgs")
_ALIASES = {"sd": "steepest_descent", "steepest": "steepest_descent"}

# largest tangent step before retraction; longer steps overshoot on the sphere
MAX_STEP = 1.0
MAX_HALVINGS = 40
ARMIJO_C = 1e-4
CURVATURE_GUARD = 1e-10


@dataclass(frozen=True)
class OptimConfig:
    strategy: str = "newton"
    learning_rate: float = 1e-2
    tol: float = 1e-6
    max_inner_iters: int = 500
    sumt_alpha0: float = 1.0
    sumt_scale: float = 10.0
    sumt_iters: int = 5
    seed: int = 0
    batch_size: Optional[int] = None
    gram_schmidt: bool = False
    hessian_damping: float = 1e-6
    regularisation: bool = True

    def __post_init__(self):
        strategy = _ALIASES.get(self.strategy, self.strategy)
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        object.__setattr__(self, "strategy", strategy)
        checks = [
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.tol > 0, "tol must be > 0"),
            (int(self.max_inner_iters) == self.max_inner_iters and self.max_inner_iters >= 1,
             "max_inner_iters must be a positive integer"),
            (self.sumt_alpha0 > 0, "sumt_alpha0 must be > 0"),
            (self.sumt_scale > 1, "sumt_scale must be > 1"),
            (int(self.sumt_iters) == self.sumt_iters and self.sumt_iters >= 1,
             "sumt_iters must be a positive integer"),
            (int(self.seed) == self.seed, "seed must be an integer"),
            (self.batch_size is None or (int(self.batch_size) == self.batch_size and self.batch_size >= 1),
             "batch_size must be a positive integer"),
            (self.hessian_damping >= 0, "hessian_damping must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    def alpha_schedule(self):
        if not self.regularisation:
            return [0.0]
        return [self.sumt_alpha0 * self.sumt_scale**s for s in range(self.sumt_iters)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ComponentDiagnostics:
    component: int
    iterations: int
    objective: float
    penalty: float
    gradient_norm: float
    converged: bool
    stage_iterations: List[int] = field(default_factory=list)
    message: str = ""

    def to_dict(self):
        return asdict(self)


@dataclass
class FitDiagnostics:
    components: List[ComponentDiagnostics]
    alpha_trace: List[float]

    @property
    def converged(self):
        return all(c.converged for c in self.components)

    def to_dict(self):
        return {
            "alpha_trace": list(self.alpha_trace),
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([ComponentDiagnostics(**c) for c in d["components"]], list(d["alpha_trace"]))


@dataclass
class FitResult:
    W: np.ndarray
    diagnostics: FitDiagnostics
    error: Optional[ComponentFitError] = None


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def gram_schmidt_step(w, basis):
    """Remove the components of ``w`` along an orthonormal ``basis`` and normalise."""
    w = np.asarray(w, dtype=np.float64)
    Q = np.asarray(basis, dtype=np.float64).reshape(-1, w.size)
    if Q.shape[0]:
        gram = Q @ Q.T
        if np.abs(gram - np.eye(Q.shape[0])).max() > 1e-8:
            raise ValueError("basis is not orthonormal")
        r = w - Q.T @ (Q @ w)
        # second pass restores orthogonality lost to cancellation
        r = r - Q.T @ (Q @ r)
    else:
        r = w.copy()
    norm = np.linalg.norm(r)
    if norm < 1e-12 * max(1.0, np.linalg.norm(w)):
        raise DegenerateResidualError("vector lies in the span of the basis")
    return r / norm


def sample_batch(n_rows, batch_size, rng_state):
    """Draw ``batch_size`` distinct row indices uniformly from ``range(n_rows)``.

    ``rng_state`` is a seed or a :class:`numpy.random.Generator`.
    """
    if not 1 <= batch_size <= n_rows:
        raise ValueError(f"batch_size must lie in [1, {n_rows}], got {batch_size}")
    rng = rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)
    return rng.choice(n_rows, size=batch_size, replace=False)


def newton_step(grad, hess, damping=0.0):
    """Solve ``(|H| + damping I) step = -grad``.

    ``|H|`` replaces the eigenvalues of ``H`` by their absolute values, so the
    step is a descent direction for indefinite Hessians too.
    """
    grad = np.asarray(grad, dtype=np.float64)
    lam, V = np.linalg.eigh(0.5 * (hess + np.transpose(hess)))
    lam = np.abs(lam) + damping
    top = lam.max()
    cond = math.inf if lam.min() <= 0 else top / lam.min()
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SingularSystemError(f"Newton system is singular (condition estimate {cond:.3g})", cond)
    return -V @ ((V.T @ grad) / lam)


def bfgs_update(H_inv, s, y):
    """Inverse-Hessian BFGS update; skipped when ``s^T y <= 1e-10``."""
    sy = float(s @ y)
    if sy <= CURVATURE_GUARD:
        return H_inv
    rho = 1.0 / sy
    n = s.size
    V = np.eye(n) - rho * np.outer(s, y)
    H = V @ H_inv @ V.T + rho * np.outer(s, s)
    return 0.5 * (H + H.T)


# --------------------------------------------------------------------------
# penalised problem on the sphere
# --------------------------------------------------------------------------


class _Problem:
    def __init__(self, objective, state, basis):
        self.objective = objective
        self.state = state
        self.Q = basis  # (k, n) orthonormal rows, possibly empty

    def value(self, w, X):
        return self.objective.value(w, X) + penalty(w, self.state)

    def gradient(self, w, X):
        return self.objective.gradient(w, X) + penalty_gradient(w, self.state)

    def hessian(self, w, X):
        return self.objective.hessian(w, X) + penalty_hessian(w, self.state)

    def project(self, w, v):
        v = v - w * (w @ v)
        if self.Q.shape[0]:
            v = v - self.Q.T @ (self.Q @ v)
        return v

    def retract(self, v):
        if self.Q.shape[0]:
            v = v - self.Q.T @ (self.Q @ v)
            v = v - self.Q.T @ (self.Q @ v)
        return v / np.linalg.norm(v)

    def lagrangian_hessian(self, w, g, H):
        n = w.size
        P = np.eye(n) - np.outer(w, w) - self.Q.T @ self.Q
        Hl = P @ (H - (w @ g) * np.eye(n)) @ P
        # the normal directions get unit curvature so the system stays regular
        return Hl + (np.eye(n) - P)


def _finite(x, what, component, iteration):
    if not np.all(np.isfinite(x)):
        raise ObjectiveEvaluationError(
            f"component {component}, iteration {iteration}: non-finite {what}"
        )
    return x


def _run_stage(problem, w, X, config, rng, component, callback=None):
    """Inner loop for one SUMT stage.  Returns (w, iterations, converged)."""
    n_rows = X.shape[0]
    use_batches = config.batch_size is not None and config.batch_size < n_rows
    H_inv = None
    scaled = False
    strategy = config.strategy

    for it in range(1, config.max_inner_iters + 1):
        Xb = X[np.sort(sample_batch(n_rows, config.batch_size, rng))] if use_batches else X

        f0 = _finite(problem.value(w, Xb), "objective value", component, it)
        g = _finite(problem.gradient(w, Xb), "gradient", component, it)
        gt = problem.project(w, g)

        if strategy == "steepest_descent":
            d = -gt
            t = config.learning_rate
        elif strategy == "newton":
            H = _finite(problem.hessian(w, Xb), "Hessian", component, it)
            Hl = problem.lagrangian_hessian(w, g, H)
            d = problem.project(w, newton_step(gt, Hl, config.hessian_damping))
            t = 1.0
        else:
            if H_inv is None:
                H_inv = np.eye(w.size)
            d = problem.project(w, -H_inv @ gt)
            if gt @ d >= 0:
                H_inv = np.eye(w.size)
                scaled = False
                d = -gt
            t = 1.0

        dn = np.linalg.norm(d)
        if not np.isfinite(dn):
            raise ComponentFitError(
                f"component {component}, iteration {it}: non-finite step", component, it
            )
        if dn == 0:
            return w, it, True
        if dn * t > MAX_STEP:
            t = MAX_STEP / dn

        slope = float(gt @ d)
        accepted = False
        for _ in range(MAX_HALVINGS):
            w_new = problem.retract(w + t * d)
            f_new = problem.value(w_new, Xb)
            if np.isfinite(f_new) and f_new <= f0 + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= 0.5

        if not accepted:
            # no decrease available at working precision
            gt_full = problem.project(w, problem.gradient(w, X)) if use_batches else gt
            return w, it, bool(np.linalg.norm(gt_full) <= config.tol)

        if strategy == "bfgs":
            g_new = problem.project(w_new, problem.gradient(w_new, Xb))
            s, y = w_new - w, g_new - gt
            if not scaled and s @ y > CURVATURE_GUARD:
                H_inv = (s @ y) / (y @ y) * np.eye(w.size)
                scaled = True
            H_inv = bfgs_update(H_inv, s, y)

        stabilised = 1.0 - abs(float(w_new @ w)) <= config.tol**2
        w = w_new
        if callback is not None:
            callback(problem.state.alpha, it, w.copy(), float(f_new), float(f0))
        gt_full = problem.project(w, problem.gradient(w, X))
        if np.linalg.norm(gt_full) <= config.tol or stabilised:
            return w, it, True

    return w, config.max_inner_iters, False


def fit_component(X, objective, state, config, previous_w=(), rng=None, component=0, callback=None):
    """Fit one unit-norm component against ``state``'s prior spectra.

    Returns ``(w, diagnostics)``; ``diagnostics.converged`` is false when the
    final SUMT stage hit ``max_inner_iters``.  ``callback(alpha, iteration,
    w, value, previous_value)`` is called after every accepted step, with
    both values measured on the same batch.
    """
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    n = X.shape[1]
    if state.prior_spectra and state.prior_spectra[0].size != n:
        raise ValueError(f"stored spectra have length {state.prior_spectra[0].size}, data has {n} columns")
    if rng is None:
        rng = np.random.default_rng([config.seed, component])

    basis = np.asarray(previous_w, dtype=np.float64).reshape(-1, n) if config.gram_schmidt else np.zeros((0, n))

    w = rng.standard_normal(n)
    w = gram_schmidt_step(w, basis)

    stage_iters = []
    converged = False
    problem = None
    for alpha in config.alpha_schedule():
        problem = _Problem(objective, state.with_alpha(alpha), basis)
        try:
            w, iters, converged = _run_stage(problem, w, X, config, rng, component, callback)
        except ObjectiveEvaluationError as exc:
            raise ComponentFitError(str(exc), component) from exc
        stage_iters.append(iters)
        logger.debug("component %d alpha=%g: %d iterations, converged=%s", component, alpha, iters, converged)

    w = w / np.linalg.norm(w)
    diag = ComponentDiagnostics(
        component=component,
        iterations=int(sum(stage_iters)),
        objective=float(objective.value(w, X)),
        penalty=float(penalty(w, problem.state)),
        gradient_norm=float(np.linalg.norm(problem.project(w, problem.gradient(w, X)))),
        converged=bool(converged),
        stage_iterations=stage_iters,
    )
    return w, diag


def fit_all(X, objective, d, config):
    """Extract ``d`` components by deflation.

    After each component its power spectrum joins the penalty state of all
    later components.  On failure the rows solved so far are returned
    together with the error in :attr:`FitResult.error`.
    """
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    n = X.shape[1]
    if int(d) != d or not 1 <= d <= n:
        raise ValueError(f"component count must lie in [1, {n}], got {d}")

    state = SpectralState((), 0.0)
    rows, diags = [], []
    error = None
    for i in range(d):
        try:
            w, diag = fit_component(X, objective, state, config, rows, component=i)
        except (ComponentFitError, DegenerateResidualError, SingularSystemError) as exc:
            if not isinstance(exc, ComponentFitError):
                exc = ComponentFitError(f"component {i}: {exc}", i)
            error = exc
            break
        rows.append(w)
        diags.append(diag)
        state = state.append(w)

    W = np.array(rows).reshape(-1, n)
    diagnostics = FitDiagnostics(diags, config.alpha_schedule())
    if error is not None:
        error.W, error.diagnostics = W, diagnostics
    return FitResult(W, diagnostics, error)
