"""Exception types shared across the package."""


class HibpError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(HibpError, ValueError):
    """An argument is outside its documented domain."""


class InconsistentEvidenceError(HibpError):
    """Evidence has zero probability under the grammar support."""


class EnumerationBudgetError(HibpError):
    """Exhaustive enumeration would exceed the configured state budget."""


class FormatError(HibpError, ValueError):
    """A file failed structural or invariant validation while parsing."""


class IntegrityError(HibpError):
    """Stored redundant fields (hashes, logits vs tensor) disagree."""


class NumericalError(HibpError):
    """A non-finite value appeared where the algorithm guarantees finiteness."""
