"""Spectral regularisation of component vectors.

For a direction ``w`` of length ``N`` the power spectrum is
``b(w)_k = |sum_n w_n exp(-2j pi k n / N)|^2`` over all ``N`` bins.  The
penalty against previously extracted components ``w_1 .. w_{i-1}`` is

    alpha * sum_j b(w)^T b(w_j)  =  alpha * w^T B w,

where ``B = sum_k c_k M_k``, ``c = sum_j b(w_j)`` and
``(M_k)_{nm} = cos(2 pi k (n - m) / N)``.  ``B`` is a symmetric circulant
matrix, so ``B w`` is also ``N * Re(ifft(c * fft(w)))``.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "power_spectrum",
    "SpectralState",
    "penalty",
    "penalty_gradient",
    "penalty_hessian",
    "penalty_matrix",
    "apply_penalty_matrix",
    "spectral_overlap",
]


def power_spectrum(w):
    """Squared modulus of the unnormalised DFT of ``w``."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("power spectrum of a non-finite vector")
    F = np.fft.fft(w)
    return F.real**2 + F.imag**2


@dataclass(frozen=True)
class SpectralState:
    """Spectra of the components solved so far plus the penalty weight."""

    prior_spectra: tuple = ()
    alpha: float = 0.0
    _weights: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        spectra = tuple(np.array(b, dtype=np.float64) for b in self.prior_spectra)
        sizes = {b.size for b in spectra}
        if len(sizes) > 1:
            raise ValueError(f"prior spectra have mixed lengths {sorted(sizes)}")
        for b in spectra:
            b.setflags(write=False)
        object.__setattr__(self, "prior_spectra", spectra)
        object.__setattr__(self, "alpha", float(self.alpha))
        if spectra:
            c = np.sum(spectra, axis=0)
            c.setflags(write=False)
            object.__setattr__(self, "_weights", c)

    @property
    def weights(self):
        """Summed prior spectra ``c``, or ``None`` for an empty state."""
        return self._weights

    def __len__(self):
        return len(self.prior_spectra)

    def append(self, w):
        """New state with ``power_spectrum(w)`` added."""
        return SpectralState(self.prior_spectra + (power_spectrum(w),), self.alpha)

    def with_alpha(self, alpha):
        return SpectralState(self.prior_spectra, alpha)

    def _check(self, w):
        w = np.asarray(w, dtype=np.float64)
        if self.prior_spectra and self.prior_spectra[0].size != w.size:
            raise ValueError(
                f"vector length {w.size} does not match stored spectra length "
                f"{self.prior_spectra[0].size}"
            )
        return w


def penalty(w, state):
    """``alpha * sum_j b(w)^T b(w_j)``; exactly zero for an empty state."""
    w = state._check(w)
    if not state.prior_spectra:
        return 0.0
    return state.alpha * float(power_spectrum(w) @ state.weights)


def penalty_matrix(state, n=None):
    """Dense ``B`` (without the ``alpha`` factor)."""
    if not state.prior_spectra:
        if n is None:
            raise ValueError("length needed for an empty state")
        return np.zeros((n, n))
    c = state.weights
    N = c.size
    k = np.arange(N)
    lag = (k[:, None] - k[None, :]) % N
    # first row of the circulant, summed directly rather than through an FFT
    r = np.cos(2.0 * np.pi * np.outer(k, k) / N).T @ c
    # r_m = r_{N-m} analytically; average so B is exactly symmetric
    r = 0.5 * (r + r[-k % N])
    return r[lag]


def apply_penalty_matrix(w, state):
    """Matrix-free ``B w``."""
    w = state._check(w)
    if not state.prior_spectra:
        return np.zeros_like(w)
    return w.size * np.fft.ifft(state.weights * np.fft.fft(w)).real


def penalty_gradient(w, state, dense=False):
    w = state._check(w)
    if dense:
        return 2.0 * state.alpha * (penalty_matrix(state, w.size) @ w)
    return 2.0 * state.alpha * apply_penalty_matrix(w, state)


def penalty_hessian(w, state):
    w = state._check(w)
    return 2.0 * state.alpha * penalty_matrix(state, w.size)


def spectral_overlap(W):
    """Pairwise cosine similarity of the rows' power spectra.

    Rows with an all-zero spectrum give zero overlap.
    """
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    S = np.array([power_spectrum(w) for w in W])
    norms = np.linalg.norm(S, axis=1)
    norms[norms == 0] = 1.0
    S = S / norms[:, None]
    return S @ S.T
