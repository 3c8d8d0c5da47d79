"""Exception hierarchy shared by every module."""


class KLStabError(Exception):
    """Base class for library errors."""


class ContractViolation(KLStabError, ValueError):
    """Caller passed arguments that break an operation's preconditions."""


class DomainError(KLStabError, ValueError):
    """Scalar argument outside the domain where a formula is defined."""


class NearSingularError(KLStabError, ValueError):
    """Covariance is not symmetric positive definite or is too ill-conditioned."""


class InternalConsistencyError(KLStabError, ArithmeticError):
    """A result violated an identity that only roundoff may perturb."""


class OutOfRegimeError(KLStabError, ValueError):
    """Divergence is too large for the stability ledger to be evaluated."""


class UnsupportedSizeError(KLStabError, ValueError):
    """Brute-force oracle requested for a problem size it does not support."""


class FlowNumericError(KLStabError, ArithmeticError):
    """A flow layer produced a non-finite value."""

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index
