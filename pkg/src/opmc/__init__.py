"""Optimized population Monte Carlo and PMC baselines."""
