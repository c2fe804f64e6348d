"""Curbside-obstruction detection from shared-bike traces and patrol scheduling."""

__version__ = "0.1.0"
