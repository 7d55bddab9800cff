"""Quantum adiabatic evolution on random Number Partitioning instances.

The package is organized bottom-up:

- ``instance``      exact-integer NPP instances, residues, Karmarkar-Karp baseline
- ``residue_stats`` coarse-grained and conditional residue distributions
- ``binning``       log-binned oracle cost and subspace dimensions
- ``hamiltonian``   matrix-free state-vector kernels over the 2^n basis
- ``spectrum``      adiabatic eigenpairs, gap scans, cumulative density of states
- ``gap_theory``    Green-function machinery: branch formulas, crossing point, gap estimate
- ``dynamics``      split-operator Schrodinger integration and complexity metric
- ``subharmonics``  dephasing exponent and approximate-common-divisor search
- ``cli``           reproducible experiment runner
"""

__version__ = "0.1.0"
