"""Single-channel signal ingestion and Hankel embedding.

A signal ``x[0..L-1]`` is embedded into the matrix ``X`` whose row ``r``
holds ``x[r*shift : r*shift + window]``.  With ``shift = 1`` every row is a
sliding window, so a unit vector ``w`` applied to the rows acts as an FIR
filter on the signal.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SignalError

__all__ = [
    "Signal",
    "HankelConfig",
    "DataMatrix",
    "load_signal",
    "hankelise",
    "hankel_rows",
    "center",
    "whiten",
    "diagonal_average",
]

FORMATS = ("csv", "f32", "f64")
_BINARY_DTYPES = {"f32": "<f4", "f64": "<f8"}


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Signal:
    """A real-valued single-channel time series.

    Parameters
    ----------
    samples : array_like
        1-D amplitudes, all finite.
    sample_rate_hz : float, optional
        Sampling frequency, strictly positive when given.
    """

    samples: np.ndarray
    sample_rate_hz: Optional[float] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise SignalError(f"signal must be 1-D, got shape {x.shape}")
        if x.size == 0:
            raise SignalError("empty input")
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise SignalError(f"non-finite sample at index {bad[0]}")
        if self.sample_rate_hz is not None:
            fs = float(self.sample_rate_hz)
            if not np.isfinite(fs) or fs <= 0:
                raise SignalError(f"sample rate must be > 0, got {self.sample_rate_hz}")
            object.__setattr__(self, "sample_rate_hz", fs)
        object.__setattr__(self, "samples", _frozen(x))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class HankelConfig:
    window_length: int
    shift: int = 1

    def __post_init__(self):
        if int(self.window_length) != self.window_length or self.window_length < 1:
            raise ValueError(f"window length must be a positive integer, got {self.window_length}")
        if int(self.shift) != self.shift or self.shift < 1:
            raise ValueError(f"shift must be a positive integer, got {self.shift}")
        object.__setattr__(self, "window_length", int(self.window_length))
        object.__setattr__(self, "shift", int(self.shift))

    def n_rows(self, length):
        """Number of Hankel rows for a signal of ``length`` samples."""
        if self.window_length > length:
            raise SignalError(
                f"window length {self.window_length} exceeds signal length {length}"
            )
        return (length - self.window_length) // self.shift + 1


@dataclass(frozen=True)
class DataMatrix:
    """Observation matrix with the preprocessing applied to it so far.

    ``mean`` is ``None`` until :func:`center` has run.  ``scale`` holds the
    per-column standard deviations used for scaling (1.0 for flagged
    zero-variance columns).  ``whitening`` is the symmetric whitening matrix
    applied after centering/scaling, if any.
    """

    values: np.ndarray
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    zero_variance: tuple = ()
    whitening: Optional[np.ndarray] = None
    hankel: Optional[HankelConfig] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"data matrix must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v))
        for name in ("mean", "scale", "whitening"):
            a = getattr(self, name)
            if a is not None:
                object.__setattr__(self, name, _frozen(a))

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


def _parse_csv(text):
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        for token in line.split(","):
            token = token.strip()
            if not token:
                continue
            try:
                values.append(float(token))
            except ValueError:
                raise SignalError(f"line {lineno}: cannot parse {token!r} as a number") from None
    return np.array(values, dtype=np.float64)


def load_signal(path, format="csv", sample_rate_hz=None):
    """Read a signal from ``path``.

    CSV files hold one value per line or a single comma-separated row.
    Binary formats are raw little-endian ``f32``/``f64`` with no header.
    """
    if format not in FORMATS:
        raise SignalError(f"unknown format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise SignalError(f"cannot read {path}: {exc}") from exc

    if format == "csv":
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SignalError(f"{path} is not UTF-8 text") from exc
        samples = _parse_csv(text)
    else:
        dtype = np.dtype(_BINARY_DTYPES[format])
        if len(raw) % dtype.itemsize:
            raise SignalError(
                f"{path}: {len(raw)} bytes is not a multiple of {dtype.itemsize}"
            )
        samples = np.frombuffer(raw, dtype=dtype).astype(np.float64)

    if samples.size == 0:
        raise SignalError("empty input")
    return Signal(samples, sample_rate_hz)


def hankel_rows(x, config):
    """Return the (uncentered) Hankel matrix of a 1-D array as a plain ndarray."""
    x = np.asarray(x, dtype=np.float64)
    config.n_rows(x.size)
    windows = np.lib.stride_tricks.sliding_window_view(x, config.window_length)
    return np.ascontiguousarray(windows[:: config.shift])


def hankelise(signal, config):
    """Embed ``signal`` into an uncentered :class:`DataMatrix`."""
    if not isinstance(signal, Signal):
        signal = Signal(signal)
    return DataMatrix(hankel_rows(signal.samples, config), hankel=config)


def center(X, scale=False):
    """Subtract column means and optionally divide by column standard deviations.

    Columns with zero sample variance are left unscaled; their indices are
    recorded in ``zero_variance`` and a warning is issued.  ``X`` may be a
    :class:`DataMatrix` or a plain 2-D array.
    """
    if not isinstance(X, DataMatrix):
        X = DataMatrix(X)
    values = X.values
    mean = values.mean(axis=0)
    centered = values - mean
    std = None
    flagged = ()
    if scale:
        if X.rows < 2:
            raise ValueError("scaling needs at least 2 rows")
        std = centered.std(axis=0, ddof=1)
        magnitude = np.maximum(np.abs(values).max(axis=0), np.finfo(float).tiny)
        zero = std <= 1e-12 * magnitude
        if zero.any():
            flagged = tuple(int(i) for i in np.flatnonzero(zero))
            warnings.warn(
                f"zero-variance columns left unscaled: {list(flagged)}", RuntimeWarning, stacklevel=2
            )
            std = np.where(zero, 1.0, std)
        centered = centered / std
    return DataMatrix(centered, mean=mean, scale=std, zero_variance=flagged, hankel=X.hankel)


def whiten(X, rcond=1e-12):
    """Apply symmetric (ZCA) whitening to a centered matrix.

    The whitening matrix ``V = E diag(lambda^-1/2) E^T`` is taken from the
    eigendecomposition of the sample covariance ``X^T X / N``.
    """
    if X.mean is None:
        raise ValueError("whitening requires a centered data matrix")
    cov = X.values.T @ X.values / X.rows
    lam, E = np.linalg.eigh(cov)
    if lam.max() <= 0 or lam.min() <= rcond * lam.max():
        raise ValueError("covariance is rank deficient; cannot whiten")
    V = (E / np.sqrt(lam)) @ E.T
    V = 0.5 * (V + V.T)
    return DataMatrix(
        X.values @ V,
        mean=X.mean,
        scale=X.scale,
        zero_variance=X.zero_variance,
        whitening=V,
        hankel=X.hankel,
    )


def diagonal_average(M, shift=1):
    """Collapse a Hankel-structured matrix back to a 1-D signal.

    Every output sample is the mean of all matrix entries that map onto it.
    The result has ``(rows - 1) * shift + cols`` samples.
    """
    M = np.asarray(M, dtype=np.float64)
    rows, cols = M.shape
    if shift > cols:
        raise ValueError(f"shift {shift} > window {cols} leaves uncovered samples")
    length = (rows - 1) * shift + cols
    total = np.zeros(length)
    count = np.zeros(length)
    for c in range(cols):
        idx = c + shift * np.arange(rows)
        np.add.at(total, idx, M[:, c])
        count[idx] += 1
    return total / count
