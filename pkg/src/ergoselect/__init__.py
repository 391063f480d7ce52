"""Selection of viscosity solutions by vanishing discount: a numerical laboratory."""

from __future__ import annotations

__version__ = "0.1.0"
