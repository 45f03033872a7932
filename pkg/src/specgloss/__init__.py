"""Differentiable split-sum inverse rendering of surfel scenes on the CPU."""
__version__ = "0.1.0"
