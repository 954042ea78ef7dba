"""Numerical toolkit for self-similar gelling profiles of the diagonal
coagulation kernel: pantograph-delay profile integration, shooting
classification in the free parameter b, the explicit stability boundary,
the fundamental solution of the linearized delay equation, a fixed-point
construction of the critical parameter at large homogeneity, and the
borderline-homogeneity asymptotic regimes."""

__version__ = "0.1.0"

from .profiles import ModelParams, make_params

__all__ = ["ModelParams", "make_params", "__version__"]
