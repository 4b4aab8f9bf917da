"""Boundary determination of a planar conductivity from DtN energies.

Modules
-------
geometry   domains, boundary frames, local graphs
mesh       quality triangulations with local refinement
fem        P1 assembly, Dirichlet solves and the DtN oracle
singular   singular probes and their calibration constants
recon      value and normal-derivative reconstruction with extrapolation
besov      Littlewood-Paley projections and empirical regularity checks
harness    configuration, experiment runner, CSV/SVG output and CLI
"""

__version__ = "0.1.0"
