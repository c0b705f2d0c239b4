"""Robust kernel density estimation and robust KDE self-attention."""
