"""Exception hierarchy shared by every losscurv module."""


class LossCurvError(Exception):
    """Base class for runtime failures raised by losscurv."""


class InvalidInput(LossCurvError, ValueError):
    pass


class EvaluationFailure(LossCurvError):
    """A field evaluation produced a non-finite value."""


class NotPositiveSemidefinite(LossCurvError):
    def __init__(self, min_eigenvalue, message=None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            message or f"matrix is not PSD (most negative eigenvalue {self.min_eigenvalue:.6g})"
        )


class GeodesicFailure(LossCurvError):
    pass


class DegenerateTrace(LossCurvError, ZeroDivisionError):
    pass


class IntegrationUnstable(LossCurvError):
    pass


class DivergedTraining(LossCurvError):
    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"non-finite loss at step {self.step}")


class ExpansionFitWarning(UserWarning):
    """The small-radius volume fit left a large residual."""
