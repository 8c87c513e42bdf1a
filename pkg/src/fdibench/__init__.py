"""fdibench: stealthy false-data injection against AC state estimation,
and the bad-data detectors meant to catch it, on desk-scale IEEE systems."""

__version__ = "0.1.0"
