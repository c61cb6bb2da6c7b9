"""Symbolic-numeric curvature toolkit: Bach and ω-Bach tensors, soliton
residuals, vector-field classification and Bach flow on coordinate charts."""

__version__ = "0.1.0"
