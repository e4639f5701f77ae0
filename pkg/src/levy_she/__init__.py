"""Tail analytics and Poisson simulation for the heat equation driven by Levy noise."""

__version__ = "0.1.0"
