"""Manifest-protocol runner: JSON manifest in, interpretation CSVs out.

Talks to the stability harness purely through files — a manifest path on
argv, CSV artifacts at the paths the manifest names. No harness imports.
"""
from .cli import main
from .manifest import ManifestError, ManifestView

__version__ = "0.1.0"

__all__ = ["ManifestError", "ManifestView", "main"]
