"""prbmplots: figures from prbmlab CSV outputs."""

__version__ = "0.1.0"
