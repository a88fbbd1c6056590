"""Probabilistic chained consensus: executable state machine, deterministic
network simulator, and the closed-form safety/liveness/cost analysis."""

__version__ = "0.1.0"
