"""Exception hierarchy shared by every module."""


class ChagnnError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ChagnnError, ValueError):
    """Arguments violate an operation's preconditions."""


class ConfigError(ChagnnError, ValueError):
    """A configuration cannot be realized (infeasible budget, spec, ...)."""


class FormatError(ChagnnError, ValueError):
    """A dataset or checkpoint file is malformed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class UndefinedRatioError(ChagnnError, ValueError):
    """Homophily ratio requested on a graph with no countable edges."""


class DegenerateScenarioError(ChagnnError, ValueError):
    """Theorem scenario with no homophily contrast (s0 == s1)."""
