"""Exception types raised across the package."""

import numpy as np


class SignalError(ValueError):
    """Bad input signal or file."""


class SchemaError(ValueError):
    """A model file does not follow the expected JSON layout."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SchemaVersionError(SchemaError):
    pass


class DegenerateResidualError(ValueError):
    """Gram-Schmidt residual vanished: the vector lies in the span of the basis."""


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class ObjectiveEvaluationError(RuntimeError):
    """An objective (or its derivatives) returned a non-finite result."""


class ComponentFitError(RuntimeError):
    """Fitting of a single component failed.

    ``W`` holds the rows that were accepted before the failure and
    ``diagnostics`` their per-component records.
    """

    def __init__(self, message, component, iteration=None, W=None, diagnostics=None):
        super().__init__(message)
        self.component = component
        self.iteration = iteration
        self.W = W
        self.diagnostics = diagnostics


class PipelineError(RuntimeError):
    """A fit/transform pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
