"""Shared domain types and local operator builders for the lattice engines.

Conventions used throughout the package (hbar = 1):

* Basis ordering is fixed globally.  Two-level atoms use (g, r) -> indices
  (0, 1); three-level atoms use (g, e, r) -> indices (0, 1, 2).  The Rydberg
  level is always the last basis state.
* All rates and frequencies are expressed in units of the reference Rabi
  frequency of the drive (omega_gr for two-level, omega_ge for three-level);
  times are in units of its inverse.
* gamma denotes the amplitude decay rate, i.e. half the population decay
  rate stored on the scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

LEVELS_TWO = ("g", "r")
LEVELS_THREE = ("g", "e", "r")


class NonConvergenceError(RuntimeError):
    """Raised when a steady-state search exhausts its time budget.

    Carries the last computed profile so callers can inspect or salvage it.
    """

    def __init__(self, message: str, profile=None):
        super().__init__(message)
        self.profile = profile


def _require_finite_nonneg(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and non-negative, got {value!r}")


@dataclass(frozen=True)
class TwoLevelScheme:
    """Direct g -> r driving with Rabi frequency omega_gr and Rydberg decay.

    gamma_rg is the population decay rate of |r>; delta the one-photon
    detuning of the laser from the g -> r resonance.
    """

    omega_gr: float
    gamma_rg: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        _require_finite_nonneg("omega_gr", self.omega_gr)
        _require_finite_nonneg("gamma_rg", self.gamma_rg)
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta!r}")

    @property
    def local_dim(self) -> int:
        return 2

    @property
    def levels(self) -> tuple[str, ...]:
        return LEVELS_TWO

    @property
    def reference_rabi(self) -> float:
        return self.omega_gr


@dataclass(frozen=True)
class ThreeLevelScheme:
    """Ladder driving g -> e -> r in the dark-state resonance configuration.

    Only the fast decay of the intermediate state |e> is retained
    (gamma_eg); the much slower decay of |r> is neglected.  delta is the
    two-photon detuning acting on the Rydberg level.
    """

    omega_ge: float
    omega_er: float
    gamma_eg: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        _require_finite_nonneg("omega_ge", self.omega_ge)
        _require_finite_nonneg("omega_er", self.omega_er)
        _require_finite_nonneg("gamma_eg", self.gamma_eg)
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta!r}")

    @property
    def local_dim(self) -> int:
        return 3

    @property
    def levels(self) -> tuple[str, ...]:
        return LEVELS_THREE

    @property
    def reference_rabi(self) -> float:
        return self.omega_ge


DriveScheme = Union[TwoLevelScheme, ThreeLevelScheme]


@dataclass(frozen=True)
class FullVdW:
    """Pairwise C6 / (a|i-j|)**6 interaction between Rydberg-excited atoms."""

    c6: float

    def __post_init__(self):
        _require_finite_nonneg("c6", self.c6)


@dataclass(frozen=True)
class NNTruncated:
    """Interaction truncated to nearest neighbours with energy u = C6 / a**6."""

    u: float

    def __post_init__(self):
        _require_finite_nonneg("u", self.u)


@dataclass(frozen=True)
class HardCoreNN:
    """Infinite nearest-neighbour repulsion; simultaneous NN excitation forbidden.

    Represented as a constraint flag rather than a large finite energy, so
    only the classical rate-equation engine consumes it.
    """


Potential = Union[FullVdW, NNTruncated, HardCoreNN]


@dataclass(frozen=True)
class LatticeModel:
    """Open 1D chain of n_sites atoms with period `spacing`."""

    n_sites: int
    potential: Potential
    spacing: float = 1.0
    boundary: str = "open"

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        if not math.isfinite(self.spacing) or self.spacing <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")
        if self.boundary != "open":
            raise ValueError("only open boundaries are supported")


def pair_energy(model: LatticeModel, i: int, j: int) -> float:
    """Interaction energy between excited atoms at sites i and j.

    HardCoreNN returns math.inf for |i-j| = 1 as a sentinel; integrating
    engines must reject that potential instead of feeding inf to a solver.
    """
    n = model.n_sites
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"site indices ({i}, {j}) outside chain of {n} sites")
    if i == j:
        raise ValueError("pair_energy requires distinct sites")
    sep = abs(i - j)
    pot = model.potential
    if isinstance(pot, FullVdW):
        return pot.c6 / (model.spacing * sep) ** 6
    if isinstance(pot, NNTruncated):
        return pot.u if sep == 1 else 0.0
    return math.inf if sep == 1 else 0.0


class SiteOperatorSet:
    """Local transition matrices |mu><nu| in the fixed basis ordering."""

    def __init__(self, local_dim: int):
        if local_dim == 2:
            self.levels = LEVELS_TWO
        elif local_dim == 3:
            self.levels = LEVELS_THREE
        else:
            raise ValueError(f"local_dim must be 2 or 3, got {local_dim}")
        self.local_dim = local_dim
        self._index = {name: k for k, name in enumerate(self.levels)}

    def index(self, level: str | int) -> int:
        if isinstance(level, str):
            try:
                return self._index[level]
            except KeyError:
                raise ValueError(
                    f"unknown level {level!r} for basis {self.levels}"
                ) from None
        if not 0 <= level < self.local_dim:
            raise ValueError(f"level index {level} outside local dimension")
        return level

    def sigma(self, mu: str | int, nu: str | int) -> np.ndarray:
        """Transition operator |mu><nu| as a dense complex matrix."""
        op = np.zeros((self.local_dim, self.local_dim), dtype=complex)
        op[self.index(mu), self.index(nu)] = 1.0
        return op

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.local_dim, dtype=complex)

    @property
    def rydberg_projector(self) -> np.ndarray:
        return self.sigma("r", "r")


def site_operators(scheme: DriveScheme) -> SiteOperatorSet:
    return SiteOperatorSet(scheme.local_dim)


def build_site_hamiltonian(scheme: DriveScheme) -> np.ndarray:
    """Single-site drive Hamiltonian plus the detuning term on the Rydberg level.

    Two-level: -(omega_gr sigma_rg + h.c.) + delta sigma_rr.
    Three-level: -(omega_ge sigma_eg + omega_er sigma_re + h.c.) + delta sigma_rr.
    Hermitian by construction (conjugate entries assigned pairwise).
    """
    ops = site_operators(scheme)
    h = np.zeros((scheme.local_dim, scheme.local_dim), dtype=complex)
    if isinstance(scheme, TwoLevelScheme):
        g, r = 0, 1
        h[r, g] = -scheme.omega_gr
        h[g, r] = -scheme.omega_gr
        h[r, r] = scheme.delta
    else:
        g, e, r = 0, 1, 2
        h[e, g] = -scheme.omega_ge
        h[g, e] = -scheme.omega_ge
        h[r, e] = -scheme.omega_er
        h[e, r] = -scheme.omega_er
        h[r, r] = scheme.delta
    assert ops.local_dim == h.shape[0]
    return h


def build_lindblad_generators(scheme: DriveScheme) -> list[np.ndarray]:
    """Local jump operators: sqrt(Gamma_rg) sigma_gr or sqrt(Gamma_eg) sigma_ge."""
    ops = site_operators(scheme)
    if isinstance(scheme, TwoLevelScheme):
        return [math.sqrt(scheme.gamma_rg) * ops.sigma("g", "r")]
    return [math.sqrt(scheme.gamma_eg) * ops.sigma("g", "e")]


@dataclass
class SteadyProfile:
    """Per-site Rydberg populations plus optional two-site correlations.

    The common output currency of all three engines.  metadata carries the
    engine tag, run parameters and convergence diagnostics.
    """

    populations: np.ndarray
    pair_correlations: dict[tuple[int, int], float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.populations = np.asarray(self.populations, dtype=float)

    @property
    def n_sites(self) -> int:
        return self.populations.size

    def validate(self, tol: float = 1e-8) -> None:
        """Check the physical bounds 0 <= p_j <= 1 and corr_jk <= min(p_j, p_k)."""
        p = self.populations
        if np.any(p < -tol) or np.any(p > 1 + tol):
            raise ValueError(f"populations outside [0, 1] beyond tol={tol}")
        for (j, k), c in self.pair_correlations.items():
            if c > min(p[j], p[k]) + tol:
                raise ValueError(
                    f"pair correlation ({j},{k})={c} exceeds min populations"
                )
