"""Exception types shared across the package."""


class GridError(ValueError):
    """Grid specification is degenerate or exceeds configured caps."""


class MaskError(ValueError):
    """Domain mask violates its invariants (no interior, bad shape, ...)."""


class DegenerateGramError(ArithmeticError):
    """The Gram matrix of first derivatives is singular (or numerically so).

    Raised by operations that require det A[u] > 0; callers that can
    meaningfully report a zero value catch this and set a degeneracy flag.
    """


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance within its budget."""


class PreconditionError(ValueError):
    """An operation was called on inputs that do not satisfy its contract."""
