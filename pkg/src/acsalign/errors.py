"""Exception types raised when a draw or a configuration cannot be processed.

Every error carries a ``details`` mapping so the CLI can print a
machine-readable diagnostic and a failing draw can be reproduced from its
seed.
"""

from __future__ import annotations

from typing import Any


class AcsAlignError(Exception):
    """Base class for all library errors."""

    kind = "error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.kind, "message": self.message, **self.details}


class DegenerateDrawError(AcsAlignError):
    """A channel realization hit a measure-zero failure; redraw it."""

    kind = "degenerate_draw"


class BasisChangeError(DegenerateDrawError):
    kind = "basis_change_failed"


class PinInfeasibleError(AcsAlignError):
    kind = "pin_infeasible"


class AlignmentError(DegenerateDrawError):
    """No chain/SPB assignment produced a valid precoder set."""

    kind = "alignment_failed"


class FilterError(DegenerateDrawError):
    kind = "filter_failed"


class ConfigError(AcsAlignError, ValueError):
    kind = "invalid_config"


class OutputError(AcsAlignError):
    kind = "output_failed"
