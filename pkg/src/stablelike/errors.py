"""Exception types. Each maps to a distinct CLI exit status."""


class StableLikeError(Exception):
    """Base class for package errors."""


class DomainError(StableLikeError, ValueError):
    """Argument outside the mathematical domain (zero displacement, eps <= 0, ...)."""


class ConfigurationError(StableLikeError, ValueError):
    """Inconsistent or incomplete configuration."""


class PreconditionError(StableLikeError, ValueError):
    """Operation precondition violated (start point outside the domain, ...)."""


class KernelBoundError(StableLikeError, RuntimeError):
    """A kernel produced values outside its declared kappa bounds."""


class SupportError(StableLikeError, RuntimeError):
    """Occupation-measure support too thin for the requested evaluation grid."""


class FamilyError(PreconditionError):
    """Kernel family not admissible for the requested check."""
