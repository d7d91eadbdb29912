"""Driven exclusion processes, their exact local-equilibrium analysis, and
stochastic-heat-equation references for KPZ-limit comparisons."""

__version__ = "0.1.0"
