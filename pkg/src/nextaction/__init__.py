"""KPI-aware next-best-action recommendations for running process instances."""

__version__ = "0.1.0"
