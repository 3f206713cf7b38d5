"""Access to the bundled demo fixture (427 sites across 32 countries)."""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path

__all__ = ["bundled_sites_path", "bundled_indicators_path"]


def _data_path(name: str) -> Path:
    return Path(str(files("jobsignal").joinpath("data", name)))


def bundled_sites_path() -> Path:
    """Site listing with deliberately incomplete rows for the cleaning stage."""
    return _data_path("sites.csv")


def bundled_indicators_path() -> Path:
    """Unemployment rates for every country in the bundled site listing."""
    return _data_path("indicators.csv")
