"""Multi-tier ultra-dense network CoMP joint transmission: simulation and analysis."""

__version__ = "0.1.0"
