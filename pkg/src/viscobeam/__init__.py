"""Viscoacoustic waves with memory: simulation, beams, probes and inverse pipelines."""
__version__ = "0.1.0"
