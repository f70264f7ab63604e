"""Exception hierarchy shared by every stage of the toolchain."""

from __future__ import annotations


class CalflowError(Exception):
    """Base class for all user-facing errors."""


class CalSyntaxError(CalflowError):
    def __init__(self, message: str, line: int = 0, col: int = 0, source: str = "<input>"):
        self.line = line
        self.col = col
        self.source = source
        super().__init__(f"{source}:{line}:{col}: {message}")


class CalSemanticError(CalflowError):
    """Name resolution, typing, arity or priority errors found during elaboration."""

    def __init__(self, message: str, line: int = 0, col: int = 0, source: str = "<input>"):
        self.line = line
        self.col = col
        self.source = source
        loc = f"{source}:{line}:{col}: " if line else ""
        super().__init__(f"{loc}{message}")


class XcfError(CalflowError):
    pass


class EvaluationError(CalflowError):
    """Runtime fault inside an action body, guard or function."""

    def __init__(self, message: str, actor: str | None = None, action: str | None = None):
        self.actor = actor
        self.action = action
        where = ""
        if actor is not None:
            where = f"[{actor}" + (f".{action}" if action else "") + "] "
        super().__init__(where + message)


class ControllerTooLarge(CalflowError):
    pass


class SimulationTimeout(CalflowError):
    pass


class PartitionError(CalflowError):
    pass


class BundleVersionError(CalflowError):
    pass
