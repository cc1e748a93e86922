"""Driven dissipative Rydberg lattice gas: three cross-validating engines.

* `rydlat.exact` integrates the full many-body Lindblad master equation for
  small chains.
* `rydlat.tebd` evolves the vectorized density operator as a matrix-product
  state with Trotterized dissipative gates.
* `rydlat.rates` solves the classical hard-core rate-equation model exactly
  (detailed balance, transfer matrix) and samples it by kinetic Monte Carlo.

`rydlat.model` holds the shared domain types, `rydlat.single_atom` the
closed-form single-atom results, `rydlat.analysis` the profile diagnostics,
and `rydlat.cli` the command-line front end.
"""

from .model import (
    DriveScheme,
    FullVdW,
    HardCoreNN,
    LatticeModel,
    NNTruncated,
    SiteOperatorSet,
    SteadyProfile,
    ThreeLevelScheme,
    TwoLevelScheme,
    build_lindblad_generators,
    build_site_hamiltonian,
    pair_energy,
    site_operators,
)

__all__ = [
    "DriveScheme",
    "FullVdW",
    "HardCoreNN",
    "LatticeModel",
    "NNTruncated",
    "SiteOperatorSet",
    "SteadyProfile",
    "ThreeLevelScheme",
    "TwoLevelScheme",
    "build_lindblad_generators",
    "build_site_hamiltonian",
    "pair_energy",
    "site_operators",
]

__version__ = "0.1.0"
