"""Exception hierarchy shared by all carre_lab modules."""


class CarreLabError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(CarreLabError):
    """An operation was called outside the regime where it is defined."""


class DimensionMismatch(PreconditionError):
    pass


# generator construction / validation


class NotSquare(PreconditionError):
    pass


class NegativeRate(PreconditionError):
    def __init__(self, i, j, value):
        super().__init__(f"negative off-diagonal rate q[{i}][{j}] = {value}")
        self.i, self.j, self.value = i, j, value


class RowSumViolation(PreconditionError):
    def __init__(self, i, defect):
        super().__init__(f"row {i} sums to {defect}, expected 0")
        self.i, self.defect = i, defect


class NonPositiveRate(PreconditionError):
    pass


class BadDimension(PreconditionError):
    pass


class NotIrreducible(PreconditionError):
    pass


class NumericalFailure(CarreLabError):
    pass


class SpecParseError(PreconditionError):
    pass


# semigroup


class NegativeTime(PreconditionError):
    pass


class ExponentialFailure(NumericalFailure):
    pass


# square-field operators


class NonCommuting(PreconditionError):
    def __init__(self, index, defect, tol):
        super().__init__(
            f"operator {index} does not commute with the generator "
            f"(||[A, M]|| = {defect:.3e} > {tol:.3e})"
        )
        self.index, self.defect, self.tol = index, defect, tol


# L2(mu) geometry


class ZeroWeight(PreconditionError):
    def __init__(self, i):
        super().__init__(f"measure has zero weight at state {i}")
        self.i = i


class NonStationaryMeasure(PreconditionError):
    pass


class NotPSD(NumericalFailure):
    pass


class EigenFailure(NumericalFailure):
    pass


class NotNormal(PreconditionError):
    pass


# energies and decay checks


class DegenerateE0(PreconditionError):
    pass


class GridTooCoarse(PreconditionError):
    pass


class TailTooHeavy(PreconditionError):
    pass


class PreconditionViolated(PreconditionError):
    pass


class NonPositiveEnergy(PreconditionError):
    pass
