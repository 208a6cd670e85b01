class HemisymError(Exception):
    """Base class for errors raised by the package."""


class InputError(HemisymError, ValueError):
    """Bad or missing input (files, shapes, parameter values)."""


class DegenerateFitError(InputError):
    pass


class EmptySideError(InputError):
    """One side of the rib mask is empty in two-snake mode."""


class NumericalError(HemisymError, ArithmeticError):
    pass


class SnakeDivergedError(NumericalError):
    def __init__(self, iteration: int):
        super().__init__(f"snake optimization diverged at iteration {iteration}")
        self.iteration = iteration
