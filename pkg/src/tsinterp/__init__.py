"""Deep time-series modeling and interpretation toolkit."""

__version__ = "0.1.0"
