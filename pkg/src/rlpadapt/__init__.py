"""RL-driven polynomial-order adaptation for a 1D discontinuous Galerkin Burgers solver."""

__version__ = "0.1.0"
