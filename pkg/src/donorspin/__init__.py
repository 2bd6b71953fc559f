"""Spin relaxation of electrons bound to shallow donors in ZnO.

Closed-form phonon-limited rates, a quadrature cross-check of the same
golden-rule rate, a rate-equation simulator of the optical measurement
protocols, and the fits used to analyse the resulting data.
"""
__version__ = "0.1.0"
