"""Exception types raised by nsfrac.

Every exception carries a stable ``code`` string so the CLI can report it in
machine-readable form.
"""


class FractalError(Exception):
    code = "ERROR"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"code": self.code, "message": str(self)}
        if self.details:
            out["details"] = {k: v for k, v in self.details.items() if _jsonable(v)}
        return out


def _jsonable(value):
    return isinstance(value, (str, int, float, bool, list, tuple, type(None)))


class NonMonotoneKnots(FractalError, ValueError):
    code = "NON_MONOTONE_KNOTS"


class TooFewKnots(FractalError, ValueError):
    code = "TOO_FEW_KNOTS"


class OutOfDomain(FractalError, ValueError):
    code = "OUT_OF_DOMAIN"


class OutOfInterval(FractalError, ValueError):
    code = "OUT_OF_INTERVAL"


class InvalidScaling(FractalError, ValueError):
    code = "INVALID_SCALING"


class InvalidBase(FractalError, ValueError):
    code = "INVALID_BASE"


class GridNotClosed(FractalError, ValueError):
    code = "GRID_NOT_CLOSED"


class NoConvergence(FractalError, RuntimeError):
    code = "NO_CONVERGENCE"

    def __init__(self, message="", report=None, **details):
        super().__init__(message, **details)
        self.report = report


class ContractionConditionViolated(FractalError, ValueError):
    code = "CONTRACTION_CONDITION_VIOLATED"


class DomainNotUnit(FractalError, ValueError):
    code = "DOMAIN_NOT_UNIT"


class BetaOutOfRange(FractalError, ValueError):
    code = "BETA_OUT_OF_RANGE"


class NonconstantScaling(FractalError, ValueError):
    code = "NONCONSTANT_SCALING"


class Undersampled(FractalError, ValueError):
    code = "UNDERSAMPLED"


class EmptySet(FractalError, ValueError):
    code = "EMPTY_SET"


class HypothesisFailed(FractalError, ValueError):
    code = "HYPOTHESIS_FAILED"


class SummabilityDoubtful(FractalError, RuntimeError):
    code = "SUMMABILITY_DOUBTFUL"


class ConfigInvalid(FractalError, ValueError):
    code = "CONFIG_INVALID"


class EndpointMismatch(FractalError, ValueError):
    code = "ENDPOINT_MISMATCH"
