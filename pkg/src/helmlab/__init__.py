"""Semiclassical lab for the Helmholtz equation with a source concentrating on a submanifold."""

__version__ = "0.1.0"
