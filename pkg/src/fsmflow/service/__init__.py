"""HTTP service layer over the extraction pipeline."""

from .app import app

__all__ = ["app"]
