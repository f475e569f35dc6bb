"""Multitype Feller branching diffusions conditioned on remote survival."""

__version__ = "0.1.0"
