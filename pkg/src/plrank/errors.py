"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
ValidationError for contract violations in user-supplied data or parameters
and NumericalError when an iterative routine reaches a non-finite or
degenerate state.
"""


class ValidationError(ValueError):
    """Input data or parameters violate a documented contract."""


class NumericalError(ArithmeticError):
    """An iterative numerical routine hit a non-finite or degenerate state."""
