"""Dissipative compressible MHD on a staggered box."""
__version__ = "0.1.0"
