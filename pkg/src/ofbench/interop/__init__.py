"""Third-party controller used for the harness-side interoperability check."""

from .osken import OsKenController, find_osken_python

__all__ = ["OsKenController", "find_osken_python"]
