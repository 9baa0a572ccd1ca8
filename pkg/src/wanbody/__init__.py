"""TreePM N-body simulation across a ring of compute sites, plus an analytic step-time model."""

__version__ = "0.1.0"
