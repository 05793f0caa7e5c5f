"""rlab: a numerical workbench for bilinear restriction-type estimates."""

from __future__ import annotations

__version__ = "0.1.0"
