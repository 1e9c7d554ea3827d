"""Federated private wavelet density estimation toolkit."""

__version__ = "0.1.0"
