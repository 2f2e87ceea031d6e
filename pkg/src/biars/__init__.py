"""Simulator for blind interference alignment with rate splitting in
laser-based optical wireless networks."""

__version__ = "0.1.0"
