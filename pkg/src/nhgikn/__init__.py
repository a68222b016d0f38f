"""Periodic approximation of nonhyperbolic ergodic measures on partially hyperbolic toral maps."""
__version__ = "0.1.0"
