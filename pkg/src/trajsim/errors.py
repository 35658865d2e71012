"""Exception types shared across the simulator, mapped to CLI exit codes."""


class TrajsimError(Exception):
    """Base class for all simulator errors."""


class CircuitSyntaxError(TrajsimError):
    """Malformed circuit or noise-model text; carries a 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(TrajsimError):
    """Well-formed input that violates a contract (CPTP, bounds, hashes, config)."""


class ExecutionError(TrajsimError):
    """Failure while evolving or sampling a trajectory."""


class AnnihilatedStateError(ExecutionError):
    """A fixed Kraus selection sent the state norm below the annihilation threshold."""
