from typing import Optional, Dict, Any
import math
import logging

logger = logging.getLogger(__name__)


class RepeaterError(Exception):
    """Base exception for repeater-model errors."""
    pass


class InvalidParameterError(RepeaterError, ValueError):
    """Raised when a numeric argument lies outside its domain."""
    pass


class ConfigurationError(RepeaterError):
    """Raised when parameters are individually valid but inconsistent together."""
    pass


class DegenerateGateError(RepeaterError):
    """Raised when the lossy purification success probability is not positive."""
    pass


class DomainExitError(RepeaterError):
    """Raised when a fidelity leaves [0.5, 1] during propagation."""

    def __init__(self, fidelity: float, stage: str, level: Optional[int] = None):
        self.fidelity = fidelity
        self.stage = stage
        self.level = level
        where = f"{stage} level {level}" if level is not None else stage
        super().__init__(f"Fidelity {fidelity:.12g} left [0.5, 1] after {where}")


class UnreachableTargetError(RepeaterError):
    """Raised when a target fidelity exceeds what the composed map can produce."""

    def __init__(self, target: float, achievable_max: float):
        self.target = target
        self.achievable_max = achievable_max
        super().__init__(
            f"Target fidelity {target:.12g} is unreachable; "
            f"achievable maximum is {achievable_max:.12g}"
        )


class ConvergenceError(RepeaterError):
    """Raised when a series or root search fails to converge."""
    pass


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNREACHABLE = 3
EXIT_CONVERGENCE = 4


def validate_positive(name: str, value: float) -> float:
    """Validate that value is a finite positive real."""
    if not math.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"{name} must be positive, got {value!r}")
    return float(value)


def validate_fidelity(value: float, *, strict_lower: bool = False) -> float:
    """Validate a fidelity in [0.5, 1] (or (0.5, 1] when strict_lower)."""
    if not math.isfinite(value) or value > 1.0 or value < 0.5:
        raise InvalidParameterError(f"Fidelity must lie in [0.5, 1], got {value!r}")
    if strict_lower and value == 0.5:
        raise InvalidParameterError("Fidelity must be strictly above 0.5")
    return float(value)


def validate_target_fidelity(value: float) -> float:
    """Validate a target fidelity in the open interval (0.5, 1)."""
    if not math.isfinite(value) or not 0.5 < value < 1.0:
        raise InvalidParameterError(f"Target fidelity must lie in (0.5, 1), got {value!r}")
    return float(value)


def validate_probability(name: str, value: float) -> float:
    """Validate a success probability in (0, 1]."""
    if not math.isfinite(value) or not 0.0 < value <= 1.0:
        raise InvalidParameterError(f"{name} must lie in (0, 1], got {value!r}")
    return float(value)


def validate_transmittance(eta: float, *, allow_one: bool = False) -> float:
    """Validate a channel transmittance in (0, 1) or (0, 1]."""
    upper_ok = eta <= 1.0 if allow_one else eta < 1.0
    if not math.isfinite(eta) or eta <= 0.0 or not upper_ok:
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise InvalidParameterError(f"Transmittance must lie in {interval}, got {eta!r}")
    return float(eta)


def validate_count(name: str, value: int, minimum: int = 0) -> int:
    """Validate an integer count with a lower bound."""
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise InvalidParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the command-line exit code."""
    if isinstance(error, (UnreachableTargetError, DomainExitError)):
        return EXIT_UNREACHABLE
    if isinstance(error, (ConvergenceError, DegenerateGateError)):
        return EXIT_CONVERGENCE
    return EXIT_CONFIG


def get_error_suggestion(error: BaseException) -> str:
    """Get helpful suggestion based on error type."""
    if isinstance(error, UnreachableTargetError):
        return (
            f"Request a final fidelity below {error.achievable_max:.6f}, "
            "lower the gate loss, or change the number of purification rounds."
        )
    elif isinstance(error, DomainExitError):
        return "The gate loss is too strong for this strategy; reduce --gate-loss."
    elif isinstance(error, ConvergenceError):
        return "A success probability is too small for the series; raise it or shorten the link."
    elif isinstance(error, DegenerateGateError):
        return "The gate transmittance is too low for purification to succeed."
    elif isinstance(error, ConfigurationError):
        return "Total length must equal segment length times a power of two; check strategy flags."
    elif isinstance(error, InvalidParameterError):
        return "Check that fidelities lie in (0.5, 1) and probabilities in (0, 1]."
    return "Check the command-line flags and the config file."


def create_error_response(error: BaseException) -> Dict[str, Any]:
    """Create a standardized, machine-readable error response."""
    details: Dict[str, Any] = {}
    if isinstance(error, UnreachableTargetError):
        details = {"target": error.target, "achievable_max": error.achievable_max}
    elif isinstance(error, DomainExitError):
        details = {"fidelity": error.fidelity, "stage": error.stage, "level": error.level}

    code = exit_code_for(error)
    if code == EXIT_UNREACHABLE:
        logger.warning(f"{type(error).__name__}: {error}")
    else:
        logger.error(f"{type(error).__name__} (exit {code}): {error}")
    return {
        "error": str(error),
        "error_type": type(error).__name__,
        "suggestion": get_error_suggestion(error),
        "exit_code": code,
        "details": details,
    }
