"""Gaussian-beam quasimodes and plane-wave geometrical optics."""
