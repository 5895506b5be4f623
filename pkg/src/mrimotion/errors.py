"""Exception hierarchy shared by all mrimotion modules.

Data / validation problems derive from :class:`ValidationError`; numerical
failures (divergence, singular systems) derive from :class:`NumericalError`.
The CLI maps the former to exit code 2 and the latter to exit code 3.
"""


class MrimotionError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MrimotionError):
    """Input violates a documented precondition or invariant."""


class DimensionError(ValidationError):
    """Shapes or grid extents are inconsistent."""


class BoundsError(ValidationError):
    """An index lies outside its axis extent."""


class DegenerateInputError(ValidationError):
    """Input is technically well-formed but statistically unusable
    (constant volume, empty foreground, zero variance, ...)."""


class OracleLimitError(ValidationError):
    """A deliberately slow reference path was asked to run beyond the
    grid size it is meant for."""


class FitError(ValidationError):
    """A statistical fit cannot be performed on the given samples."""


class NumericalError(MrimotionError):
    """A numerical computation failed (singular system, non-finite values)."""


class TrainingDivergenceError(NumericalError):
    """Training produced non-finite loss or gradients."""
