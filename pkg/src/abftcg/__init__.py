"""Fault-tolerant sparse products and a resilient preconditioned CG solver."""

__version__ = "0.1.0"
