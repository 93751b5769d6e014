"""Model objectives L_model(w) with value, gradient and Hessian.

Every objective is evaluated for a direction ``w`` (length ``L_w``) against
a centered data matrix ``X`` of shape ``(N, L_w)``.  Objectives are minimised,
so variance and negentropy appear with a negative sign.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import ObjectiveEvaluationError

__all__ = [
    "Objective",
    "ExplicitObjective",
    "PCAObjective",
    "NegentropyObjective",
    "NegentropyConfig",
    "pca_objective",
    "negentropy_objective",
    "finite_difference_gradient",
    "finite_difference_hessian",
    "gaussian_reference",
    "log_cosh",
    "relative_error",
]

FD_GRADIENT_STEP = 1e-6
FD_HESSIAN_STEP = 1e-4

G_FUNCTIONS = ("logcosh", "exp", "quartic")

_LOG2 = np.log(2.0)


def _data(X):
    return np.asarray(getattr(X, "values", X), dtype=np.float64)


def relative_error(estimate, reference):
    """``||estimate - reference|| / ||reference||`` (L2 / Frobenius).

    Falls back to the absolute error when the reference is exactly zero.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    diff = np.linalg.norm(estimate - reference)
    scale = np.linalg.norm(reference)
    return float(diff / scale) if scale > 0 else float(diff)


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def _evaluate(f, points, batched):
    if batched:
        out = np.asarray(f(points), dtype=np.float64).reshape(-1)
    else:
        out = np.array([f(p) for p in points], dtype=np.float64)
    return out


def _check_finite(values, coords):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ObjectiveEvaluationError(
            f"non-finite objective value while differencing coordinate {coords[bad[0]]}"
        )


def finite_difference_gradient(f, w, h=FD_GRADIENT_STEP, batched=False):
    """Central-difference gradient of the scalar function ``f`` at ``w``.

    If ``batched`` is true, ``f`` is called once with a 2-D stack of
    points (one per row) and must return one value per row.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    w = np.asarray(w, dtype=np.float64)
    n = w.size
    E = h * np.eye(n)
    points = np.concatenate([w + E, w - E])
    vals = _evaluate(f, points, batched)
    _check_finite(vals, np.concatenate([np.arange(n), np.arange(n)]))
    return (vals[:n] - vals[n:]) / (2.0 * h)


def finite_difference_hessian(f, w, h=FD_HESSIAN_STEP, batched=False):
    """Second-order central-difference Hessian of ``f`` at ``w``.

    Diagonal entries use the three-point stencil, off-diagonal entries the
    four-point cross stencil; the result is symmetrised.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    w = np.asarray(w, dtype=np.float64)
    n = w.size
    iu, ju = np.triu_indices(n, k=1)
    eye = h * np.eye(n)
    pp = w + eye[iu] + eye[ju]
    pm = w + eye[iu] - eye[ju]
    mp = w - eye[iu] + eye[ju]
    mm = w - eye[iu] - eye[ju]
    points = np.concatenate([w[None, :], w + eye, w - eye, pp, pm, mp, mm])
    vals = _evaluate(f, points, batched)
    m = iu.size
    coords = [None] + list(range(n)) * 2 + list(zip(iu.tolist(), ju.tolist())) * 4
    _check_finite(vals, coords)

    f0 = vals[0]
    fp, fm = vals[1 : n + 1], vals[n + 1 : 2 * n + 1]
    cross = vals[2 * n + 1 :].reshape(4, m)
    H = np.zeros((n, n))
    H[np.diag_indices(n)] = (fp - 2.0 * f0 + fm) / h**2
    H[iu, ju] = (cross[0] - cross[1] - cross[2] + cross[3]) / (4.0 * h**2)
    H[ju, iu] = H[iu, ju]
    return 0.5 * (H + H.T)


# --------------------------------------------------------------------------
# objective contract
# --------------------------------------------------------------------------


class Objective:
    """Base class for model objectives.

    Subclasses implement :meth:`value`.  :meth:`gradient` and
    :meth:`hessian` default to central finite differences
    (``fd_gradient_step`` / ``fd_hessian_step``).  :meth:`value_batch`
    evaluates many directions at once and is used by the difference
    schemes; override it when a vectorised form is cheap.
    """

    name = "objective"
    fd_gradient_step = FD_GRADIENT_STEP
    fd_hessian_step = FD_HESSIAN_STEP

    def value(self, w, X):
        raise NotImplementedError

    def value_batch(self, Ws, X):
        return np.array([self.value(w, X) for w in Ws], dtype=np.float64)

    def _batched(self, X):
        X = _data(X)
        return lambda Ws: self.value_batch(Ws, X)

    def gradient(self, w, X):
        return finite_difference_gradient(self._batched(X), w, self.fd_gradient_step, batched=True)

    def hessian(self, w, X):
        return finite_difference_hessian(self._batched(X), w, self.fd_hessian_step, batched=True)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class ExplicitObjective(Objective):
    """Objective assembled from user callables ``f(w, X)``.

    Missing derivatives are filled in with finite differences.

    Examples
    --------
    >>> obj = ExplicitObjective(lambda w, X: -np.mean((X @ w) ** 2), name="variance")
    >>> g = obj.gradient(np.array([1.0, 0.0]), np.eye(2))
    """

    def __init__(
        self,
        value: Callable,
        gradient: Optional[Callable] = None,
        hessian: Optional[Callable] = None,
        name: str = "explicit",
    ):
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.name = name

    def value(self, w, X):
        return float(self._value(np.asarray(w, dtype=np.float64), _data(X)))

    def gradient(self, w, X):
        if self._gradient is None:
            return super().gradient(w, X)
        return np.asarray(self._gradient(np.asarray(w, dtype=np.float64), _data(X)), dtype=np.float64)

    def hessian(self, w, X):
        if self._hessian is None:
            return super().hessian(w, X)
        return np.asarray(self._hessian(np.asarray(w, dtype=np.float64), _data(X)), dtype=np.float64)


class PCAObjective(Objective):
    """Negative latent variance, ``-w^T C w`` with ``C = X^T X / N``."""

    name = "pca"

    def value(self, w, X):
        z = _data(X) @ np.asarray(w, dtype=np.float64)
        return -float(np.mean(z * z))

    def value_batch(self, Ws, X):
        Z = _data(X) @ np.asarray(Ws, dtype=np.float64).T
        return -np.mean(Z * Z, axis=0)

    def gradient(self, w, X):
        X = _data(X)
        return -2.0 * (X.T @ (X @ w)) / X.shape[0]

    def hessian(self, w, X):
        X = _data(X)
        return -2.0 * (X.T @ X) / X.shape[0]


def pca_objective():
    return PCAObjective()


# --------------------------------------------------------------------------
# negentropy
# --------------------------------------------------------------------------


def log_cosh(u):
    """``log(cosh(u))`` that stays finite for large ``|u|``."""
    au = np.abs(u)
    return au + np.log1p(np.exp(-2.0 * au)) - _LOG2


def _g_functions(kind, a):
    """Return (G, g, g') for a contrast function."""
    if kind == "logcosh":
        G = lambda u: log_cosh(a * u) / a
        g = lambda u: np.tanh(a * u)

        def dg(u):
            t = np.tanh(a * u)
            return a * (1.0 - t * t)

    elif kind == "exp":
        G = lambda u: -np.exp(-0.5 * u * u)
        g = lambda u: u * np.exp(-0.5 * u * u)
        dg = lambda u: (1.0 - u * u) * np.exp(-0.5 * u * u)
    elif kind == "quartic":
        G = lambda u: 0.25 * u**4
        g = lambda u: u**3
        dg = lambda u: 3.0 * u * u
    else:
        raise ValueError(f"unknown G function {kind!r}; expected one of {G_FUNCTIONS}")
    return G, g, dg


# E[G(nu)] for nu ~ N(0, 1)
_STORED_REFERENCES = {
    ("logcosh", 1.0): 0.374567207491438,
    ("exp", None): -1.0 / np.sqrt(2.0),
    ("quartic", None): 0.75,
}


@lru_cache(maxsize=64)
def _quadrature_reference(kind, a):
    G = _g_functions(kind, a)[0]
    phi = lambda u: np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
    val, _ = integrate.quad(lambda u: float(G(u)) * phi(u), -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12)
    return val


def gaussian_reference(kind, a=1.0):
    """Expected value of the contrast ``G`` under a standard normal."""
    key = (kind, float(a) if kind == "logcosh" else None)
    if key in _STORED_REFERENCES:
        return _STORED_REFERENCES[key]
    if kind not in G_FUNCTIONS:
        raise ValueError(f"unknown G function {kind!r}; expected one of {G_FUNCTIONS}")
    return _quadrature_reference(kind, float(a))


@dataclass(frozen=True)
class NegentropyConfig:
    """Contrast choice for the negentropy objective.

    ``a`` only matters for ``logcosh`` and must lie in ``[1, 2]``.  When
    ``gaussian_reference`` is omitted it is filled in from stored
    constants or quadrature.
    """

    g_function: str = "logcosh"
    a: float = 1.0
    gaussian_reference: Optional[float] = None

    def __post_init__(self):
        if self.g_function not in G_FUNCTIONS:
            raise ValueError(f"unknown G function {self.g_function!r}; expected one of {G_FUNCTIONS}")
        if self.g_function == "logcosh" and not 1.0 <= self.a <= 2.0:
            raise ValueError(f"logcosh parameter a must lie in [1, 2], got {self.a}")
        ref = gaussian_reference(self.g_function, self.a)
        if self.gaussian_reference is None:
            object.__setattr__(self, "gaussian_reference", ref)
        elif abs(self.gaussian_reference - ref) > 1e-4:
            raise ValueError(
                f"gaussian_reference {self.gaussian_reference} disagrees with E[G(nu)] = {ref:.6f}"
            )


class NegentropyObjective(Objective):
    """Negated squared negentropy approximation.

    ``value = -m^2`` with ``m = mean(G(X w)) - E[G(nu)]``.
    """

    def __init__(self, config=None):
        self.config = config or NegentropyConfig()
        self._G, self._g, self._dg = _g_functions(self.config.g_function, self.config.a)
        self._ref = self.config.gaussian_reference

    @property
    def name(self):
        c = self.config
        if c.g_function == "logcosh":
            return f"negentropy(logcosh,a={c.a:g})"
        return f"negentropy({c.g_function})"

    def _m(self, z):
        return np.mean(self._G(z), axis=0) - self._ref

    def value(self, w, X):
        m = self._m(_data(X) @ np.asarray(w, dtype=np.float64))
        return -float(m * m)

    def value_batch(self, Ws, X):
        m = self._m(_data(X) @ np.asarray(Ws, dtype=np.float64).T)
        return -(m * m)

    def _parts(self, w, X):
        z = X @ w
        m = float(np.mean(self._G(z)) - self._ref)
        dm = X.T @ self._g(z) / X.shape[0]
        return z, m, dm

    def gradient(self, w, X):
        X = _data(X)
        _, m, dm = self._parts(np.asarray(w, dtype=np.float64), X)
        return -2.0 * m * dm

    def hessian(self, w, X):
        X = _data(X)
        z, m, dm = self._parts(np.asarray(w, dtype=np.float64), X)
        curv = (X * self._dg(z)[:, None]).T @ X / X.shape[0]
        H = -2.0 * (np.outer(dm, dm) + m * curv)
        return 0.5 * (H + H.T)


def negentropy_objective(config=None):
    return NegentropyObjective(config)
