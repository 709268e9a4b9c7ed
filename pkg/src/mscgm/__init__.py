"""Wavelet-domain Brownian-bridge diffusion with multi-scale adversarial detail synthesis."""

__version__ = "0.1.0"
