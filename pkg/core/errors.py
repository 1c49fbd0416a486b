# core/errors.py
"""Exception hierarchy shared by every package in the repo."""


class AgentLoopError(Exception):
    """Base class for all harness errors."""


class MalformedRecordError(AgentLoopError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class InvariantViolationError(AgentLoopError):
    def __init__(self, invariant: str, detail: str = ""):
        text = f"invariant violated: {invariant}"
        if detail:
            text += f" ({detail})"
        super().__init__(text)
        self.invariant = invariant


class FixtureError(AgentLoopError):
    """One or more fixtures broke their invariants; names every offender."""

    def __init__(self, problems: dict[str, str]):
        self.problems = dict(problems)
        self.task_ids = list(self.problems)
        lines = [f"{task_id}: {reason}" for task_id, reason in self.problems.items()]
        super().__init__("invalid fixtures:\n  " + "\n  ".join(lines))


class ConfigError(AgentLoopError):
    pass


class ProviderError(AgentLoopError):
    """A model, embedding, summarizer or judge provider failed."""


class ProviderUnavailableError(ProviderError):
    pass


class DuplicateToolError(AgentLoopError):
    pass


class InvalidSchemaError(AgentLoopError):
    pass


class InsufficientHistoryError(AgentLoopError):
    pass


class TooFewScoresError(AgentLoopError):
    pass


class DimensionMismatchError(AgentLoopError):
    pass


class ZeroVectorError(AgentLoopError):
    pass


class EmptyInputError(AgentLoopError):
    pass


class TaskMismatchError(AgentLoopError):
    pass
