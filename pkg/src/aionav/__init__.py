"""2D navigation framework with a learned control switch over local planners."""

__version__ = "0.1.0"
