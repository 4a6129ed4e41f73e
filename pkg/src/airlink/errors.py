"""Exception hierarchy shared by every airlink module."""


class AirlinkError(Exception):
    """Base class for all airlink errors."""


class SizeError(AirlinkError, ValueError):
    """Array lengths or counts do not fit the operation."""


class ConfigurationError(AirlinkError, ValueError):
    """An object was built with parameters that make no sense."""


class DegenerateStateError(AirlinkError, ValueError):
    """LFSR seeded with the all-zero state."""


class GeometryError(AirlinkError, ValueError):
    """Scene geometry is degenerate (coincident points, no paths)."""


class TruncationError(AirlinkError, ValueError):
    """Analysis window too short for the requested taps."""


class RangeError(AirlinkError, IndexError):
    """Requested delay or index lies outside the available buffer."""


class NumericalError(AirlinkError, ArithmeticError):
    """Non-finite values entered a numerical loop."""


class LockError(AirlinkError):
    """Path searcher found no path above the detection floor."""


class ValidationError(AirlinkError, ValueError):
    """Scenario configuration failed validation.

    ``problems`` holds one human readable line per violated field.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
