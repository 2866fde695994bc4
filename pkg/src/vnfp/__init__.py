"""Numerical laboratory for the homogeneous Vlasov-Nordström-Fokker-Planck system."""

__version__ = "0.1.0"
