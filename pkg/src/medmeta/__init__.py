"""Meta-evaluation harness for radiology-report text metrics."""

__version__ = "0.1.0"
