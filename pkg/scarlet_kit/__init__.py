"""Desk-scale toolkit for scalable weight-sharing supernets with learnable stabilizers."""

__version__ = "0.1.0"
