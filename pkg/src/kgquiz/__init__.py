"""Knowledge-graph driven MCQ generation with interpretable difficulty estimation."""

__version__ = "0.1.0"
