"""causalab: an end-to-end causal analysis workbench."""

__version__ = "0.1.0"
