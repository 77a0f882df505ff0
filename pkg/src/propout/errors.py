"""Exception hierarchy shared by the library and the command line."""


class PropoutError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PropoutError, ValueError):
    """A numeric parameter lies outside its domain."""


class InputError(PropoutError, ValueError):
    """Input data is missing, empty or structurally unusable."""


class ParseError(InputError):
    """A data row could not be parsed.

    ``line`` is the 1-based physical line number of the offending row.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScenarioError(PropoutError, ValueError):
    """A simulation scenario cannot be realised as configured."""
