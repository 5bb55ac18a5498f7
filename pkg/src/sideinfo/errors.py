"""Exception hierarchy shared by all modules."""


class SideInfoError(Exception):
    """Base class; ``kind`` is the machine-readable name used by the CLI."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InputError(SideInfoError):
    pass


class NegativeMass(InputError):
    pass


class NotNormalized(InputError):
    def __init__(self, total: float):
        super().__init__(f"total mass {total!r} deviates from 1 by {total - 1.0:.3e}")
        self.deviation = total - 1.0


class ZeroMarginal(InputError):
    def __init__(self, axis: str, label):
        super().__init__(f"marginal P_{axis}({label!r}) is zero")
        self.axis = axis
        self.label = label


class DuplicateLabel(InputError):
    pass


class UnknownSymbol(InputError):
    pass


class AlphabetMismatch(InputError):
    pass


class StreamLengthMismatch(InputError):
    pass


class MalformedHeader(InputError):
    pass


class ZeroProbabilitySymbol(InputError):
    pass


class EmptyRestriction(SideInfoError):
    pass


class BudgetExceeded(SideInfoError):
    pass


class RegimeUndetermined(SideInfoError):
    pass


class BoundViolated(SideInfoError):
    pass


class KraftViolated(BoundViolated):
    pass
