"""Exception hierarchy shared across the package.

The CLI maps :class:`ConfigError`, :class:`DataError` and
:class:`DependencyError` onto exit codes 2, 3 and 4.
"""


class BreadError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(BreadError, ValueError):
    pass


class SizeError(BreadError, ValueError):
    pass


class SpecError(BreadError, ValueError):
    pass


class DomainError(BreadError, ValueError):
    pass


class ArityError(BreadError, ValueError):
    pass


class NumericError(BreadError, ArithmeticError):
    """A loss or gradient went non-finite; ``term`` names the culprit."""

    def __init__(self, term: str, message: str | None = None):
        self.term = term
        super().__init__(message or f"non-finite value in loss term {term!r}")


class FormatError(BreadError, ValueError):
    pass


class ModelError(BreadError, ValueError):
    pass


class BundleError(BreadError, ValueError):
    pass


class ConfigError(BreadError, ValueError):
    pass


class DataError(BreadError, OSError):
    pass


class DependencyError(BreadError, RuntimeError):
    """A training stage was requested before the stage it depends on."""

    def __init__(self, stage: str, needs: str):
        self.stage = stage
        self.needs = needs
        super().__init__(f"stage {stage!r} needs a {needs!r} checkpoint; run `bread train --stage {needs}` first")
