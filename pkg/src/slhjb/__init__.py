"""Semi-Lagrangian Markov chain approximation of finite-horizon control problems."""

__version__ = "0.1.0"
