"""Boundary visit amplitudes of chordal SLE.

Exact finite-dimensional solver for the zig-zag vectors, screening-integral
evaluation of the amplitude functions (loop and real-iterated-integral
schemes), closed forms for one and two visit points, conformal transport to
square and triangle domains, and lattice-model samplers for comparison.
"""

__version__ = "0.1.0"
