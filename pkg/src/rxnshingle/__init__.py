"""Reaction featurization by molecular shingles and a pair-biased set transformer."""

__version__ = "0.1.0"
