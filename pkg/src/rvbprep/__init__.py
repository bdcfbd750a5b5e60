"""Desk-scale simulation of dynamical RVB state preparation in
blockade-constrained Rydberg atom arrays on the ruby lattice."""

__version__ = "0.1.0"
