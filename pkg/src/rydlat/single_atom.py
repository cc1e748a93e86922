"""Closed-form single-atom steady states, linewidths, blockade distance and
the pump-to-decay ratios kappa feeding the classical rate-equation model.

The steady-state formulas are treated as exact defining expressions of this
module; their accuracy against the numerically integrated single-atom master
equation is measured in the test suite rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import DriveScheme, FullVdW, LatticeModel, ThreeLevelScheme, TwoLevelScheme


def steady_population(scheme: DriveScheme) -> float:
    """Steady-state Rydberg population of an isolated, continuously driven atom.

    Two-level: |O_gr|^2 / (2|O_gr|^2 + g_rg^2 + D^2).
    Three-level: |O_ge|^2 (|O_ge|^2 + |O_er|^2) /
                 ((|O_ge|^2 + |O_er|^2)^2 + (g_eg^2 + 2|O_ge|^2) D^2),
    with g = Gamma/2 the amplitude decay rate and D the detuning.
    """
    d2 = scheme.delta**2
    if isinstance(scheme, TwoLevelScheme):
        o2 = scheme.omega_gr**2
        gamma2 = (scheme.gamma_rg / 2) ** 2
        denom = 2 * o2 + gamma2 + d2
        if denom == 0:
            raise ValueError("degenerate all-zero drive: steady state undefined")
        return o2 / denom
    oge2 = scheme.omega_ge**2
    oer2 = scheme.omega_er**2
    s = oge2 + oer2
    if s == 0:
        raise ValueError("degenerate all-zero drive: steady state undefined")
    gamma2 = (scheme.gamma_eg / 2) ** 2
    return oge2 * s / (s**2 + (gamma2 + 2 * oge2) * d2)


def linewidth(scheme: DriveScheme) -> float:
    """Half width of the Lorentzian excitation profile ``steady_population(delta)``."""
    if isinstance(scheme, TwoLevelScheme):
        gamma = scheme.gamma_rg / 2
        return math.sqrt(2 * scheme.omega_gr**2 + gamma**2)
    gamma = scheme.gamma_eg / 2
    s = scheme.omega_ge**2 + scheme.omega_er**2
    denom = math.sqrt(gamma**2 + 2 * scheme.omega_ge**2)
    if denom == 0:
        raise ValueError("linewidth undefined for zero drive and zero decay")
    return s / denom


@dataclass(frozen=True)
class BlockadeCheck:
    """Blockade distance d_b = (C6 / w)^(1/6) and the NN-only condition a < d_b < 2a."""

    distance: float
    nn_only: bool


def blockade_distance(model: LatticeModel, scheme: DriveScheme) -> BlockadeCheck:
    """Distance below which a Rydberg atom blocks the excitation of another."""
    if not isinstance(model.potential, FullVdW):
        raise ValueError("blockade distance requires the full vdW potential (C6)")
    w = linewidth(scheme)
    if w == 0:
        raise ValueError("zero linewidth: blockade distance diverges")
    d_b = (model.potential.c6 / w) ** (1 / 6)
    a = model.spacing
    return BlockadeCheck(distance=d_b, nn_only=a < d_b < 2 * a)


def kappa(scheme: DriveScheme) -> float:
    """Pump-to-decay rate ratio of the classical model.

    kappa_2 = |O_gr|^2 / (|O_gr|^2 + g_rg^2);  kappa_3 = |O_ge|^2 / |O_er|^2.
    At delta = 0 these equal p / (1 - p) with p the single-atom steady
    population; see `kappa_identity_diagnostic` for the ratio bookkeeping.
    """
    if isinstance(scheme, TwoLevelScheme):
        o2 = scheme.omega_gr**2
        gamma2 = (scheme.gamma_rg / 2) ** 2
        if o2 + gamma2 == 0:
            raise ValueError("kappa undefined for zero drive and zero decay")
        return o2 / (o2 + gamma2)
    if scheme.omega_er == 0:
        raise ValueError("kappa diverges for omega_er = 0")
    return scheme.omega_ge**2 / scheme.omega_er**2


def kappa_identity_diagnostic(scheme: DriveScheme) -> dict:
    """Compare kappa with both population ratios at delta = 0.

    The rate-model stationarity fixes p = kappa / (1 + kappa), i.e.
    kappa = p/(1-p).  The inverse ratio (1-p)/p is also reported because the
    defining text equates kappa with it; the two differ by reciprocal and
    only one can match the printed formulas.
    """
    at_resonance = (
        TwoLevelScheme(scheme.omega_gr, scheme.gamma_rg, 0.0)
        if isinstance(scheme, TwoLevelScheme)
        else ThreeLevelScheme(scheme.omega_ge, scheme.omega_er, scheme.gamma_eg, 0.0)
    )
    p = steady_population(at_resonance)
    k = kappa(at_resonance)
    return {
        "kappa": k,
        "population": p,
        "excited_over_ground": p / (1 - p) if p < 1 else math.inf,
        "ground_over_excited": (1 - p) / p if p > 0 else math.inf,
    }


def _kappa_shifted(scheme: ThreeLevelScheme, beta: float, steps: int) -> float:
    # steps = 2**n such that the next-nearest-neighbour detuning is
    # (NN detuning)/steps for a 1/d**(6 or 3) potential; beta = NN detuning
    # in units of the excitation linewidth.
    if not isinstance(scheme, ThreeLevelScheme):
        raise ValueError("corrected kappa is defined for the three-level scheme")
    if not math.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and non-negative, got {beta!r}")
    oge2 = scheme.omega_ge**2
    oer2 = scheme.omega_er**2
    shift = (oge2 + oer2) * (beta / steps) ** 2
    denom = oer2 + shift
    if denom == 0:
        raise ValueError("kappa diverges: omega_er = 0 and beta = 0")
    return oge2 / denom


def kappa_nnn_corrected(scheme: ThreeLevelScheme, beta: float) -> float:
    """kappa_3 reduced by the residual vdW level shift of next-nearest neighbours.

    kappa' = |O_ge|^2 / (|O_er|^2 + (|O_ge|^2 + |O_er|^2)(beta/64)^2), bounded
    above by (64/beta)^2; 64 = 2**6 from the 1/d**6 tail at twice the spacing.
    """
    return _kappa_shifted(scheme, beta, 64)


def kappa_dipole_corrected(scheme: ThreeLevelScheme, beta: float) -> float:
    """Same correction for a C3/d**3 dipole-dipole interaction: 64 -> 8 = 2**3."""
    return _kappa_shifted(scheme, beta, 8)
