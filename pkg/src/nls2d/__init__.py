"""Numerical toolkit for ground-state dynamics of the 2D nonlinear Schrodinger
equation: soliton families, the matrix linearization and its spectrum,
distorted-wave scattering, the resonant damping coefficient, reduced
normal-form dynamics, and full split-step simulations.
"""

__version__ = "0.1.0"
