"""Fitted linear latent variable model.

Encoding is ``z = W x`` on preprocessed Hankel rows, decoding is
``x = A z`` with ``A`` the Moore-Penrose pseudoinverse of ``W``.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import PipelineError, SchemaError, SchemaVersionError
from .optimiser import FitDiagnostics, OptimConfig, fit_all
from .signal_io import DataMatrix, HankelConfig, Signal, center, hankel_rows, hankelise, whiten
from .spectral import power_spectrum

__all__ = ["FittedModel", "fit", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

_REQUIRED = (
    "schema_version",
    "window_length",
    "shift",
    "d",
    "mean",
    "scale",
    "W",
    "A",
    "objective",
    "optim_config",
    "diagnostics",
    "spectra",
)
# extension: whitening matrix, null when the model was fitted without whitening
_OPTIONAL = ("whitening",)


@dataclass(frozen=True)
class FittedModel:
    W: np.ndarray
    A: np.ndarray
    mean: np.ndarray
    scale: Optional[np.ndarray]
    hankel: HankelConfig
    spectra: np.ndarray
    diagnostics: FitDiagnostics
    optim_config: dict
    objective: str
    whitening: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("W", "A", "mean", "scale", "spectra", "whitening"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=np.float64)
                a.setflags(write=False)
                object.__setattr__(self, name, a)

    @property
    def n_components(self):
        return self.W.shape[0]

    @property
    def window_length(self):
        return self.hankel.window_length

    # ------------------------------------------------------------------
    def _rows(self, data):
        if isinstance(data, Signal):
            return hankel_rows(data.samples, self.hankel)
        if isinstance(data, DataMatrix):
            # undo the matrix's own preprocessing; the model's is applied afterwards
            X = data.values
            if data.whitening is not None:
                X = X @ np.linalg.inv(data.whitening)
            if data.scale is not None:
                X = X * data.scale
            if data.mean is not None:
                X = X + data.mean
            return X
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            return hankel_rows(Signal(data).samples, self.hankel)
        return data

    def preprocess(self, data):
        """Hankelise (if needed), center, scale and whiten with stored parameters."""
        X = self._rows(data)
        if X.ndim != 2 or X.shape[1] != self.window_length:
            raise ValueError(
                f"expected {self.window_length} columns, got array of shape {X.shape}"
            )
        X = X - self.mean
        if self.scale is not None:
            X = X / self.scale
        if self.whitening is not None:
            X = X @ self.whitening
        return X

    def transform(self, data):
        """Latent sources ``Z`` with one row per Hankel row.

        ``data`` may be a :class:`Signal`, a 1-D sample array, a
        :class:`DataMatrix` or a raw (uncentered) 2-D row matrix.
        """
        return self.preprocess(data) @ self.W.T

    def inverse_transform(self, Z):
        """Map latent rows back to the data space, undoing all preprocessing."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.n_components:
            raise ValueError(f"expected {self.n_components} latent columns, got {Z.shape[1]}")
        X = Z @ self.A.T
        if self.whitening is not None:
            X = X @ np.linalg.inv(self.whitening)
        if self.scale is not None:
            X = X * self.scale
        return X + self.mean

    def source_spectra(self, signal, sample_rate_hz=None):
        """Power spectra of the latent source signals.

        Each latent column is treated as a time series sampled once per
        Hankel row, i.e. at ``fs / shift``.  Returns ``(power, freqs)``
        where ``power`` is ``(d, L_H)`` and ``freqs`` gives the frequency
        in Hz of bins ``0 .. L_H // 2`` (``None`` without a sample rate).
        """
        if sample_rate_hz is None and isinstance(signal, Signal):
            sample_rate_hz = signal.sample_rate_hz
        Z = self.transform(signal)
        F = np.fft.fft(Z, axis=0)
        power = (F.real**2 + F.imag**2).T
        freqs = None
        if sample_rate_hz is not None:
            n = Z.shape[0]
            freqs = np.arange(n // 2 + 1) * (sample_rate_hz / self.hankel.shift) / n
        return power, freqs

    # ------------------------------------------------------------------
    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "window_length": self.hankel.window_length,
            "shift": self.hankel.shift,
            "d": self.n_components,
            "mean": self.mean.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "W": self.W.tolist(),
            "A": self.A.tolist(),
            "objective": self.objective,
            "optim_config": dict(self.optim_config),
            "diagnostics": self.diagnostics.to_dict(),
            "spectra": self.spectra.tolist(),
            "whitening": None if self.whitening is None else self.whitening.tolist(),
        }

    def save(self, path):
        # float repr is the shortest string that round-trips, so matrices reload bit for bit
        text = json.dumps(self.to_dict(), indent=1, allow_nan=False)
        Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise SchemaError("model document must be a JSON object")
        if "schema_version" not in doc:
            raise SchemaError("missing field 'schema_version'", "schema_version")
        version = doc["schema_version"]
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"unsupported schema_version {version!r}; this build reads version {SCHEMA_VERSION}",
                "schema_version",
            )
        for key in _REQUIRED:
            if key not in doc:
                raise SchemaError(f"missing field {key!r}", key)
        unknown = sorted(set(doc) - set(_REQUIRED) - set(_OPTIONAL))
        if unknown:
            raise SchemaError(f"unknown field {unknown[0]!r}", unknown[0])

        for key in ("window_length", "shift", "d"):
            if not isinstance(doc[key], int) or isinstance(doc[key], bool) or doc[key] < 1:
                raise SchemaError(f"field {key!r} must be a positive integer", key)
        n, d = doc["window_length"], doc["d"]

        def matrix(key, shape, nullable=False):
            value = doc.get(key)
            if value is None and nullable:
                return None
            try:
                a = np.array(value, dtype=np.float64)
            except (TypeError, ValueError):
                raise SchemaError(f"field {key!r} is not numeric", key) from None
            if a.shape != shape:
                raise SchemaError(f"field {key!r} has shape {a.shape}, expected {shape}", key)
            if not np.all(np.isfinite(a)):
                raise SchemaError(f"field {key!r} contains non-finite values", key)
            return a

        W = matrix("W", (d, n))
        A = matrix("A", (n, d))
        mean = matrix("mean", (n,))
        scale = matrix("scale", (n,), nullable=True)
        spectra = matrix("spectra", (d, n))
        whitening = matrix("whitening", (n, n), nullable=True)
        if np.abs(np.linalg.norm(W, axis=1) - 1.0).max() > 1e-10:
            raise SchemaError("rows of 'W' are not unit norm", "W")
        if not isinstance(doc["objective"], str):
            raise SchemaError("field 'objective' must be a string", "objective")
        for key in ("optim_config", "diagnostics"):
            if not isinstance(doc[key], dict):
                raise SchemaError(f"field {key!r} must be an object", key)
        try:
            diagnostics = FitDiagnostics.from_dict(doc["diagnostics"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"field 'diagnostics' is malformed: {exc}", "diagnostics") from None

        return cls(
            W=W,
            A=A,
            mean=mean,
            scale=scale,
            hankel=HankelConfig(n, doc["shift"]),
            spectra=spectra,
            diagnostics=diagnostics,
            optim_config=doc["optim_config"],
            objective=doc["objective"],
            whitening=whitening,
        )

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


def fit(signal, hankel, objective, d, optim=None, scale=False, whiten_data=False):
    """Hankelise, preprocess and fit ``d`` components to ``signal``.

    Raises :class:`PipelineError` labelled with the failing stage.  A
    failure while fitting a component carries the partially solved rows
    on its ``cause`` (a :class:`ComponentFitError`).
    """
    optim = optim or OptimConfig()
    if not isinstance(signal, Signal):
        signal = Signal(signal)
    if int(d) != d or not 1 <= d <= hankel.window_length:
        raise ValueError(f"component count must lie in [1, {hankel.window_length}], got {d}")

    try:
        X = hankelise(signal, hankel)
    except ValueError as exc:
        raise PipelineError("hankelise", exc) from exc
    try:
        X = center(X, scale=scale)
        if whiten_data:
            X = whiten(X)
    except ValueError as exc:
        raise PipelineError("preprocess", exc) from exc

    result = fit_all(X, objective, d, optim)
    if result.error is not None:
        raise PipelineError("fit", result.error) from result.error

    W = result.W
    return FittedModel(
        W=W,
        A=np.linalg.pinv(W),
        mean=X.mean,
        scale=X.scale,
        hankel=hankel,
        spectra=np.array([power_spectrum(w) for w in W]),
        diagnostics=result.diagnostics,
        optim_config=optim.to_dict(),
        objective=objective.name,
        whitening=X.whitening,
    )
