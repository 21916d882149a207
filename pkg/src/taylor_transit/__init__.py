"""Transition analysis for axisymmetric Taylor-Couette flow between rotating cylinders."""

__version__ = "0.1.0"
