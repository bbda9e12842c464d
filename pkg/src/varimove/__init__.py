"""Two-scale minimizing-movements simulator for a compressible fluid and a visco-elastic solid."""

__version__ = "0.1.0"
