# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT


class CbiLabException(Exception):
    """Generic parent class for exceptions thrown by cbilab."""


class CbiLabWarning(CbiLabException, UserWarning):
    """Generic parent class for warnings issued by cbilab."""


class BoundaryCaseWarning(CbiLabWarning):
    """Issued when a classification verdict sits on a parameter boundary.

    Notes
    -----
    Verdicts are discontinuous at these boundaries, so a perturbation of the
    parameters at the level of floating-point round-off can flip them.
    """


class CbiLabDomainError(CbiLabException, ValueError):
    """An argument lies outside of the domain where an operation is defined."""


class MechanismDomainError(CbiLabDomainError):
    """A mechanism or model was constructed with invalid parameters.

    Parameters
    ----------
    message : str

    field : Optional[str]
        The name of the offending parameter, if there is a single one.
    """

    def __init__(self, message: str, field=None) -> None:
        super().__init__(message)
        self.field = field


class NonPositiveDriftError(MechanismDomainError):
    """The effective drift of the branching mechanism is not positive."""


class TransformDomainError(CbiLabDomainError):
    pass


class RecurrentModelError(TransformDomainError):
    """A quantity that only exists for transient models was requested."""


class QuadratureDomainError(CbiLabDomainError):
    pass


class NumericalError(CbiLabException, ArithmeticError):
    pass


class FlowError(NumericalError):
    """The ODE solver for the flow ``v_t(q)`` failed."""


class SimulationError(CbiLabException):
    pass


class ConfigError(CbiLabException):
    """A configuration cannot be turned into a valid model or command.

    Parameters
    ----------
    message : str

    key : Optional[str]
        The dotted config key that caused the failure.
    """

    def __init__(self, message: str, key=None) -> None:
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
