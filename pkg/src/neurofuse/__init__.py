"""Joint grey/white-matter ICA fusion, loading-based patient subtyping,
mutual-KNN cross-tissue networks, graph metrics and network fingerprints."""

from __future__ import annotations

from .errors import NeurofuseError, NumericalError, ValidationError

__all__ = ["NeurofuseError", "NumericalError", "ValidationError"]
