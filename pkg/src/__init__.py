"""GIGG shrinkage regression: sampler, hyperparameter estimation, diagnostics and simulation."""

__version__ = "1.0.0"
