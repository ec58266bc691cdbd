"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Vector length does not match the space dimension."""


class UnsupportedError(NotImplementedError):
    """The requested computation has no exact route for this input class."""


class BudgetExceededError(RuntimeError):
    """A brute-force search would exceed its configured evaluation budget."""


class BlowUpError(RuntimeError):
    """A time-stepping run left its admissible amplitude or stability range.

    Attributes
    ----------
    step : int
        Index of the step at which the run was aborted.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step
