"""Dataflow compiler and heterogeneous execution toolkit for a CAL actor subset."""

__version__ = "0.1.0"
