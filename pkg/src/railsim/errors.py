"""Exception types shared across the simulator."""


class RailsimError(Exception):
    """Base class for all railsim errors."""


class ConfigError(RailsimError):
    """Malformed scenario or econ configuration."""


class InvalidNicConfig(ConfigError):
    """NIC port count outside the supported set."""


class RadixExceeded(RailsimError):
    """Per-rail port demand exceeds the circuit switch radix."""


class InvalidParams(ConfigError):
    """Workload parameters inconsistent with the topology."""


class NotMember(RailsimError):
    """Rank is not a member of the communication group."""


class ParseError(RailsimError):
    """Trace file violates the record format."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CyclicDependency(RailsimError):
    """Event dependencies contain a cycle."""


class UnsupportedKind(RailsimError):
    """Collective kind has no ring realization on a circuit rail."""


class DegreeInfeasible(RailsimError):
    """A group's ring needs more simultaneous circuits than NIC ports."""


class ConflictDeadlock(RailsimError):
    """The reconfiguration queue cannot drain."""


class EmptyPhase(RailsimError):
    """Phase contains no collective events."""


class EmptyInput(RailsimError):
    """Operation requires at least one element."""
