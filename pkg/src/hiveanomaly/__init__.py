"""Anomaly detection for beehive sensor streams: six detectors, a split/tune/evaluate pipeline and a synthetic data generator."""

__version__ = "0.1.0"
