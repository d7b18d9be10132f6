from typing import Any



class VtdError(ValueError):
    """Base error of the time-stepping library; carries a context dict for JSON reporting."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: dict[str, Any] = dict(context)

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": {key: _jsonable(value) for key, value in self.context.items()},
        }

    def __reduce__(self):
        return _restore, (type(self), self.message, self.context)


def _restore(cls, message: str, context: dict) -> "VtdError":
    return cls(message, **context)


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


# numkernel
class PrecisionMismatch(VtdError):
    pass


class SingularMatrix(VtdError):
    pass


class OrderMismatch(VtdError):
    pass


# polynomial / quadrature
class OutOfInterval(VtdError):
    pass


class SingularConstraintSystem(VtdError):
    pass


class InvalidParameters(VtdError):
    pass


# problem
class SingularMass(VtdError):
    pass


class UnknownProblem(VtdError):
    pass


# solver
class SolverError(VtdError):
    """Local problem could not be solved."""


class NewtonDiverged(SolverError):
    pass


class SingularJacobian(SolverError):
    pass


class InvalidMesh(VtdError):
    pass


class SingularSystem(SolverError):
    pass


# postprocess
class InsufficientSmoothness(VtdError):
    pass


# analysis
class NonPositiveError(VtdError):
    pass


# run level
class ConfigError(VtdError):
    pass



class OutputError(VtdError):
    pass
