"""Exception types shared across modules (mapped to CLI exit codes)."""


class InputError(ValueError):
    """Malformed or out-of-domain input (exit code 2)."""


class CapExceeded(RuntimeError):
    """A configured resource cap was hit (exit code 3)."""

    def __init__(self, cap, limit, observed=None, where=""):
        self.cap = cap
        self.limit = limit
        self.observed = observed
        self.where = where
        super().__init__(f"{where}: cap {cap}={limit} exceeded" + (f" (reached {observed})" if observed is not None else ""))

    def to_json(self):
        return {"cap": self.cap, "limit": str(self.limit),
                "observed": None if self.observed is None else str(self.observed),
                "where": self.where}


class InvariantViolation(AssertionError):
    """A proof-carrying re-check failed (exit code 4); always a bug."""


class HypothesisFailure(ValueError):
    """A checked precondition of a construction does not hold."""

    def __init__(self, message, witness=None, stage=None):
        self.witness = witness
        self.stage = stage
        super().__init__(message)
