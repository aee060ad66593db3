"""Exception types raised across the solver."""


class DoptError(Exception):
    """Base class for solver errors."""


class ContractViolation(DoptError, ValueError):
    """An input broke a documented precondition (shape, symmetry, ordering)."""


class SingularUpdate(DoptError, ArithmeticError):
    """A rank-one update would make the matrix singular."""


class RankDeficient(DoptError, ValueError):
    """A matrix expected to have full column rank does not."""


class Infeasible(DoptError, ValueError):
    """A point or a polytope violates the problem constraints."""


class ParseError(DoptError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NodePruneSingular(DoptError):
    """No feasible point of the node has a nonsingular information matrix."""


class SingularPrimal(DoptError, ArithmeticError):
    """The primal point handed to a certificate builder is rank deficient."""


class RankDrop(DoptError):
    """A line-search direction does not have the rank its closed form needs."""


class TooLarge(DoptError):
    """An enumeration oracle was asked to enumerate too many points."""
