"""Self-hosted anomaly detection service for time-series metrics."""

__version__ = "0.1.0"
