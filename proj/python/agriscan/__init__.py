"""Python access to the agriscan pipeline."""

import json

from ._core import (
    AgriscanError,
    __version__,
    bpa_area,
    config_hash,
    exposure_step,
    georeference,
    m3c2,
)
from ._core import run_stage as _run_stage


def run_stage(stage, config=None, out="out", seed=None):
    """Run one pipeline stage and return its manifest as a dict."""
    return json.loads(_run_stage(stage, None if config is None else str(config), str(out), seed))


__all__ = [
    "AgriscanError",
    "__version__",
    "bpa_area",
    "config_hash",
    "exposure_step",
    "georeference",
    "m3c2",
    "run_stage",
]
