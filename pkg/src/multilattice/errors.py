"""Exception hierarchy shared by the library and the command line."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NotReconstructing(ValidationError):
    """The single rank-1 lattice is not injective on the frequency set."""


class InternalConsistencyError(RuntimeError):
    """A guarantee that should hold by construction was violated."""


class CandidateExhausted(InternalConsistencyError):
    """No candidate prime achieved the required halving."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SearchExhausted(InternalConsistencyError):
    """The component-by-component search ran past its size ceiling."""


class ResourceLimitError(MemoryError):
    """A configured size or precision budget would be exceeded."""
