"""eclat: analysis and simulation toolkit for safe eventually consistent domain models."""

__version__ = "0.1.0"
