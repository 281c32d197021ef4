"""Global interactive pattern learning for interpretable graph classification."""

__version__ = "0.1.0"
