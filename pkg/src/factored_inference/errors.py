"""Exception hierarchy shared by every solver and the CLI."""


class FactoredInferenceError(Exception):
    """Base class for all errors raised by this package."""


class InvalidFactor(FactoredInferenceError, ValueError):
    pass


class EssentialDiscontinuity(FactoredInferenceError, ValueError):
    """A Gaussian in mean-variance form was given zero variance."""


class NonIntegrableBelief(FactoredInferenceError):
    """A factor-level or variable-level belief has no finite integral."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class DegenerateBelief(FactoredInferenceError):
    pass


class NumericalBreakdown(FactoredInferenceError):
    pass


class BadInit(FactoredInferenceError):
    pass


class CapExceeded(FactoredInferenceError):
    pass


class DegenerateProduct(FactoredInferenceError):
    pass


class UnsupportedSize(FactoredInferenceError, ValueError):
    pass


class ConstructionFailed(FactoredInferenceError):
    pass
