"""Custom exception classes"""


class PopsError(Exception):
    """Base exception for simulator errors"""

    code = "POPS_ERROR"
    exit_code = 1


class DomainError(PopsError):
    """Raised when an id, size or probability is outside its domain"""

    code = "DOMAIN_ERROR"


class PermutationValidationError(PopsError):
    """Raised when a routing input is not a bijection on [0, n)"""

    code = "INVALID_PERMUTATION"


class UnsupportedConfigError(PopsError):
    """Raised when an operation does not support the given (d, g)"""

    code = "UNSUPPORTED_CONFIG"


class UnknownSuiteError(PopsError):
    """Raised when a verification suite name is not registered"""

    code = "UNKNOWN_SUITE"


class PlanContractError(PopsError):
    """Raised when a caller hands the engine an illegal slot plan"""

    code = "CONTRACT_ERROR"
    exit_code = 2


class InvariantViolation(PopsError):
    """Raised when a simulation breaks one of its guaranteed properties"""

    code = "INVARIANT_VIOLATION"
    exit_code = 2


class PacketLossDetected(InvariantViolation):
    """Raised when an acknowledged copy is lost in the final delivery slot"""

    code = "LOSS_DETECTED"

    def __init__(self, message: str, packet_ids: list[int] | None = None):
        super().__init__(message)
        self.packet_ids = packet_ids or []


class ReportIOError(PopsError):
    """Raised when reports, configs or permutation files cannot be read or written"""

    code = "IO_ERROR"
    exit_code = 3
