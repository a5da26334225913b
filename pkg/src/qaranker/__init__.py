"""Retrieval and attention-based document ranking for multiple-choice QA."""

__version__ = "0.1.0"
