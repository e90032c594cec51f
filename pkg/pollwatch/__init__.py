"""pollwatch — synthetic elections with labeled fraud, and a poll-aware regional anomaly detector."""

__version__ = "0.1.0"
