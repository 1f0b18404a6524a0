"""Exception hierarchy shared across the simulator."""


class SocdiagError(Exception):
    """Base class for all errors raised by this package."""


# --- event model ---

class DuplicateTypeId(SocdiagError):
    pass


class ReservedTypeId(SocdiagError):
    pass


class SchemaMismatch(SocdiagError):
    pass


class UnknownTypeId(SocdiagError):
    pass


class TruncatedPayload(SocdiagError):
    pass


# --- workloads ---

class InvalidSpec(SocdiagError):
    pass


class WrongWorkloadKind(SocdiagError):
    pass


class MalformedLine(SocdiagError):
    """A bad line in an event-log file; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


# --- event generators ---

class TriggerCapacityExceeded(SocdiagError):
    pass


# --- configuration / validation (also drive CLI exit codes) ---

class ConfigError(SocdiagError):
    """Structural problem in a configuration (schema level)."""


class ValidationError(SocdiagError):
    """Semantically invalid graph, mapping, or platform setup."""


class ZeroDuration(SocdiagError):
    pass


class UnsupportedBehavior(ValidationError):
    pass


class UnmappedActor(ValidationError):
    pass
