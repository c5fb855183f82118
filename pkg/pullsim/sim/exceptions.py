"""Errors raised by the simulator core."""


class PullSimError(Exception):
    """Base class for every simulator error."""


class SchedulingInPast(PullSimError):
    def __init__(self, event_time, clock):
        super().__init__(f"cannot schedule at t={event_time} when clock is t={clock}")
        self.event_time = event_time
        self.clock = clock


class UnknownNode(PullSimError):
    pass


class UnknownObject(PullSimError):
    pass


class EmptyImageSet(PullSimError):
    pass


class ZeroBytes(PullSimError):
    pass


class EmptyWindow(PullSimError):
    pass


class ConfigParseError(PullSimError):
    """The scenario file is not syntactically valid (exit code 2)."""


class ScenarioValidationError(PullSimError):
    """The scenario parses but describes an impossible setup (exit code 3)."""


class CalibrationError(PullSimError):
    pass
