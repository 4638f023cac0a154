"""Analytical pipeline: main-link law, CoMP size, Gamma approximation, coverage."""
