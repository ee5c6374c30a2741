"""Exception hierarchy.

Every error raised on bad input derives from :class:`HSLError` (itself a
``ValueError``).  The CLI maps :class:`DegenerateError` to exit code 3 and
every other :class:`HSLError` to exit code 2.
"""


class HSLError(ValueError):
    pass


class DimensionError(HSLError):
    """Array shapes or channel counts do not agree."""


class ParameterError(HSLError):
    """A scalar parameter is outside its admissible range."""


class FormatError(HSLError):
    """A file on disk is malformed, truncated or has the wrong magic."""


class EmptyForegroundError(HSLError):
    """A mask that must contain foreground is empty."""


class DegenerateError(HSLError):
    """A numeric procedure hit a degenerate configuration it cannot resolve."""
