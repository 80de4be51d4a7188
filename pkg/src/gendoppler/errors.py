"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map a
failure class to a process status without inspecting messages.
"""


class GenDopplerError(Exception):
    exit_code = 3


# -- validation class (exit 2) ----------------------------------------------

class ValidationError(GenDopplerError):
    exit_code = 2


class ExprSyntaxError(ValidationError):
    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class UnknownIdentifierError(ExprSyntaxError):
    pass


class BasePointMismatchError(ValidationError):
    pass


class ParameterRangeError(ValidationError):
    pass


class NullObserverError(ValidationError):
    pass


class ScenarioError(ValidationError):
    """Invalid scenario file or scenario object (section and constraint in the message)."""


# -- numerical class (exit 3) ------------------------------------------------

class NumericalError(GenDopplerError):
    exit_code = 3


class ExprDomainError(NumericalError):
    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message)


class DegenerateMetricError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class ChartExitError(IntegrationError):
    pass


class InconsistentTransportError(NumericalError):
    """The transport does not preserve the metric's scalar products."""


class DiagnosticError(NumericalError):
    pass


class NonCollinearMomentumError(NumericalError):
    pass


class ZeroEnergyError(NumericalError):
    pass


# -- consistency class (exit 4) ---------------------------------------------

class ConsistencyBreach(GenDopplerError):
    exit_code = 4
