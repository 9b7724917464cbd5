# labelteach/errors.py
"""
Structured errors for labelteach.

Every error carries a `context` dict so callers (and the CLI) can print
what went wrong without parsing the message.
"""

from typing import Any, Optional


class LabelTeachError(Exception):
    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = dict(context)

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
        return f"{base} ({extra})"


class DimensionError(LabelTeachError, ValueError):
    """Shapes do not agree."""


class NonFiniteError(LabelTeachError, ValueError):
    """NaN or Inf where a finite number is required."""


class ConstraintError(LabelTeachError, ValueError):
    """Label constraint is invalid or has an empty admissible set."""


class DegenerateError(LabelTeachError, ValueError):
    """A formula hit a zero denominator or a zero gradient."""


class SingularHessianError(LabelTeachError, RuntimeError):
    pass


class DataFormatError(LabelTeachError, ValueError):
    """Malformed input file (IDX, pool, checkpoint, CSV)."""


class ConfigError(LabelTeachError, ValueError):
    pass


class TeachingError(LabelTeachError, RuntimeError):
    """Teaching or teacher training went off the rails."""

    def __init__(self, message: str, dump: Optional[dict] = None, **context: Any):
        super().__init__(message, **context)
        self.dump = dump or {}
