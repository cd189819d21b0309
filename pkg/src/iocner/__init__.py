"""Neural sequence labelling of Indicators of Compromise in threat reports."""

__version__ = "0.1.0"
