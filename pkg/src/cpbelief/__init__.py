"""Contextual preference rule mining, consensus aggregation and
belief-system interestingness ranking."""

__version__ = "0.1.0"
