"""Convexity-informed dueling Q-learning on belief-space tasks."""

__version__ = "0.1.0"
