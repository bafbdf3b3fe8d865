"""Differentially private Wasserstein GAN for graph-structured time series."""

__version__ = "0.1.0"
