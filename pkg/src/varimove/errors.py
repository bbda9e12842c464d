"""Exception hierarchy shared by all subsystems."""


class VarimoveError(Exception):
    """Base class for every error raised by the package."""


class NonPositiveJacobian(VarimoveError):
    """A pushed fluid element has det(I + tau grad v) at or below the floor."""


class DeterminantBoundViolation(VarimoveError):
    """The running flow-map determinant left its configured bounds."""


class InadmissibleDeformation(VarimoveError):
    """The solid deformation has a non-positive Jacobian somewhere."""


class NegativeDensity(VarimoveError):
    pass


class SolverFailure(VarimoveError):
    pass


class LineSearchStall(VarimoveError):
    """No admissible decrease was found along the search direction."""


class MaxIterations(VarimoveError):
    pass


class MeshQualityExhausted(VarimoveError):
    """The Lagrangian fluid mesh degenerated below the minimum-angle floor."""


class CollisionDetected(VarimoveError):
    pass


class ConfigInvalid(VarimoveError):
    """Raised with the full list of violated parameter constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


class MeshFormatError(VarimoveError):
    pass
