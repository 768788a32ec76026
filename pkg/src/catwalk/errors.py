class NumericalFault(ArithmeticError):
    """A computation lost the accuracy it promises (unstable recursion, vanishing denominator)."""


class UnreliableEstimate(UserWarning):
    """A Monte Carlo estimate rests on too few retained samples."""
