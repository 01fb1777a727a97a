"""Heat-kernel invariants of non-Laplace type operators built from Dirac symbols."""

from __future__ import annotations

__version__ = "0.1.0"
