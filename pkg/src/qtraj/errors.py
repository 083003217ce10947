"""Exception hierarchy. Everything derives from :class:`QTrajError`."""


class QTrajError(Exception):
    pass


class InvalidState(QTrajError, ValueError):
    pass


class NotPSD(InvalidState):
    pass


class DimensionMismatch(QTrajError, ValueError):
    pass


class NotTracePreserving(QTrajError, ValueError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotStochastic(QTrajError, ValueError):
    def __init__(self, message, column=None, residual=None):
        super().__init__(message)
        self.column = column
        self.residual = residual


class UnknownLabel(QTrajError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown label"


class WordTooLong(QTrajError):
    pass


class NoFixedPoint(QTrajError):
    pass


class ZeroMap(QTrajError, ValueError):
    pass


class NotUnraveling(QTrajError, ValueError):
    pass


class DegenerateDistribution(QTrajError):
    pass


class FilterCollapse(QTrajError):
    def __init__(self, message, step=None, label=None, mass=None):
        super().__init__(message)
        self.step = step
        self.label = label
        self.mass = mass


class KernelConditionViolated(QTrajError, ValueError):
    pass


class HorizonTooLarge(QTrajError, ValueError):
    pass


class ZeroPrefixProbability(QTrajError):
    pass


class AtomBudgetExceeded(QTrajError):
    pass


class TooManyAtoms(QTrajError, ValueError):
    pass


class ParseError(QTrajError, ValueError):
    pass
