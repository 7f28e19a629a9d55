"""Synthetic benchmarks, experiment configs, result files and the CLI."""

from .synthetic import SyntheticSpec, build_composite, build_fdtilde

__all__ = ["SyntheticSpec", "build_composite", "build_fdtilde"]
