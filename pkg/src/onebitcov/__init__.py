"""Covariance recovery from one-bit quantized Gaussian samples."""
