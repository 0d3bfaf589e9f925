"""Constructive spanning clique subdivisions in pseudorandom graphs."""

__version__ = "0.1.0"
