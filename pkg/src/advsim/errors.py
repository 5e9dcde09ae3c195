"""Exception hierarchy.

Split into config / data / runtime branches so the CLI can map failure
classes to distinct exit codes.
"""


class AdvSimError(Exception):
    """Base class for all package errors."""


class ConfigError(AdvSimError):
    """Invalid configuration: bad flag combinations, missing paths, bad config file."""


class DataError(AdvSimError):
    """Invalid input data (scenario files, label files, model files)."""


class ScenarioFormatError(DataError):
    """Scenario file does not match the JSON schema; names the offending field."""


class ScenarioValidationError(DataError):
    """Scenario violates a type invariant; carries agent_id/timestamp context."""


class EmptyHistoryError(DataError):
    """Observation requested before the first recorded sample."""


class GridError(DataError):
    """Two pose sequences do not share a common time grid."""


class InsufficientDataError(DataError):
    """Operation needs future/history data the scenario does not contain."""


class DegenerateCorpusError(DataError):
    """Training corpus contains a single class."""


class NoOpponentError(AdvSimError):
    """No surrounding vehicle is eligible for opponent selection."""


class EndOfLogError(AdvSimError):
    """Replay planner ran past the recorded log; terminates the episode."""


class PathLostError(AdvSimError):
    """Reactive planner lost its reference path beyond recovery."""
