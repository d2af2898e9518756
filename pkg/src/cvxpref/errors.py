"""Exception types. The CLI maps each to a distinct exit code."""


class InputError(ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


class SolverError(RuntimeError):
    """A numerical solver aborted: breakdown, NaN, divergence (exit code 3)."""


class VerificationError(AssertionError):
    """An oracle or integrity check failed (exit code 4)."""
