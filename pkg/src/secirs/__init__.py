"""Secure IRS-assisted transmission: sensing, design optimization and simulation."""
__version__ = "0.1.0"
