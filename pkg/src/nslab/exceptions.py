"""Exception hierarchy shared across the package."""


class NslabError(Exception):
    """Base class for all package errors."""


class KernelValidationError(NslabError, ValueError):
    """A kernel violates its support or H1 monotonicity requirements."""


class DomainError(NslabError, ValueError):
    """Grid, parameter or argument outside its admissible domain."""


class NumericError(NslabError, FloatingPointError):
    """Non-finite values encountered in a computation."""


class NumericDivergence(NumericError):
    """The solver produced a non-finite or out-of-range state.

    ``last_state`` holds the most recent accepted state.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class FormulaError(NslabError, ArithmeticError):
    """A threshold formula was evaluated outside the hypotheses it relies on."""


class IntegrationError(NslabError, RuntimeError):
    """ODE integration failed before reaching its stopping criterion."""


class ConfigError(NslabError, ValueError):
    """Invalid experiment configuration; the message names the key path."""
