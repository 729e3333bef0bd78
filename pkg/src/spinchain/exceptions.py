"""Exception hierarchy shared by every spinchain module."""


class SpinChainError(Exception):
    """Base class for all errors raised by spinchain."""


class CapacityError(SpinChainError, ValueError):
    """A dense matrix would exceed the supported 64x64 size."""


class ContractError(SpinChainError, ValueError):
    """An input violates an operation's preconditions."""


class DomainError(SpinChainError, ValueError):
    """A scalar function was evaluated outside its domain."""


class PositivityError(SpinChainError, ValueError):
    """A constructed state is not positive semidefinite.

    Attributes:
        bound: the admissible bound or offending eigenvalue, when known.
    """

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class LGCError(SpinChainError, ValueError):
    """A reduced single-qubit state is not diagonal, so no temperature exists."""


class LayoutError(SpinChainError, ValueError):
    """A circuit uses a two-qubit gate outside the coupling map."""


class CalibrationError(SpinChainError, RuntimeError):
    """An optimizer failed to reach its declared tolerance.

    Attributes:
        report: the best report found before giving up.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
