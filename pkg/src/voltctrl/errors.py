"""Exception types raised across the package.

Every error carries a message naming the offending element (bus id, line,
field path, ...) so that CLI output and test failures are actionable.
"""


class VoltctrlError(Exception):
    """Base class for all package errors."""


# -- network construction ------------------------------------------------

class NetworkError(VoltctrlError):
    pass


class CycleDetected(NetworkError):
    pass


class DisconnectedBus(NetworkError):
    pass


class NonpositiveImpedance(NetworkError):
    pass


class DuplicateLine(NetworkError):
    pass


class UnknownBus(NetworkError):
    pass


# -- power flow -----------------------------------------------------------

class PowerflowError(VoltctrlError):
    pass


class DimensionMismatch(PowerflowError):
    pass


class NoConvergence(PowerflowError):
    def __init__(self, max_iter: int, detail: str = ""):
        self.max_iter = max_iter
        msg = f"power flow did not converge within {max_iter} iterations"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonpositiveVoltage(PowerflowError):
    pass


# -- simulation -----------------------------------------------------------

class SimulationError(VoltctrlError):
    pass


class HistoryUnderflow(SimulationError):
    pass


class InvalidHorizon(SimulationError):
    pass


# -- QP reference solver ----------------------------------------------------

class OracleError(VoltctrlError):
    pass


class Infeasible(OracleError):
    pass


# -- scenario loading -------------------------------------------------------

class ScenarioError(VoltctrlError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass
