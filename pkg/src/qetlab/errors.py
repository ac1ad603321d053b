"""Exception types shared across qetlab."""


class QetError(Exception):
    """Base class for all qetlab errors."""


class DimensionError(QetError, ValueError):
    pass


class NotHermitianError(QetError, ValueError):
    pass


class NotDensityError(QetError, ValueError):
    pass


class EigenConvergenceError(QetError, ArithmeticError):
    pass


class SiteRangeError(QetError, IndexError):
    pass


class DegenerateGroundStateError(QetError):
    """Raised when the two lowest eigenvalues of H are closer than the threshold."""

    def __init__(self, gap, threshold):
        self.gap = gap
        self.threshold = threshold
        super().__init__(
            f"ground state is degenerate: gap {gap:.3e} <= threshold {threshold:.1e}"
        )


class GeometryError(QetError):
    def __init__(self, violation):
        self.violation = violation
        super().__init__(str(violation))


class IncompleteSchemeError(QetError, ValueError):
    pass


class SupportError(QetError, ValueError):
    """Feedback generator acts outside the receiver's actuation interior."""


class LocalityError(QetError):
    """A commutator that must vanish by locality does not."""


class InvariantError(QetError):
    pass


class ConfigError(QetError, ValueError):
    """Config document failed to parse; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
