"""Sweat-pore extraction and pore-assisted latent fingerprint identification."""

__version__ = "0.1.0"
