"""POPS(d, g) permutation routing simulator"""

__version__ = "1.0.0"
