"""Match-SRNN: spatial-GRU semantic matching, built on numpy."""

__version__ = "0.1.0"
