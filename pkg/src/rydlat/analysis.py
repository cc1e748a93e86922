"""Profile diagnostics: correlation-length fits, period-2 oscillation
amplitudes, and cross-engine comparison metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SteadyProfile

NOISE_FLOOR = 1e-10


class FitRejected(ValueError):
    """Profile does not support an exponential-decay fit; message says why."""


@dataclass
class CorrelationFit:
    """Result of an exponential fit to the decaying boundary oscillations."""

    xi: float
    stderr: float
    bulk_value: float
    sites: np.ndarray
    residuals: np.ndarray


def _populations(profile) -> np.ndarray:
    if isinstance(profile, SteadyProfile):
        return profile.populations
    return np.asarray(profile, dtype=float)


def fit_correlation_length(
    profile,
    region,
    monotonic_tol: float = 0.25,
) -> CorrelationFit:
    """Correlation length from log-linear decay of |p_j - p_bulk|.

    Fits log|p_j - p_bulk| against the site index over the sites of `region`
    that share the parity of its first element, excluding the chain
    endpoints (the boundary enhancement is not part of the exponential
    regime).  p_bulk is the mean over the central 20% of same-parity sites
    of the whole chain.  The fit is rejected when fewer than 4 usable sites
    remain, when the profile is flat at the noise floor, or when the log
    residuals increase by more than `monotonic_tol` between consecutive
    fit sites.
    """
    p = _populations(profile)
    n = p.size
    sites = [int(j) for j in region]
    if not sites:
        raise FitRejected("empty fit region")
    parity = sites[0] % 2
    sites = [j for j in sites if j % 2 == parity and 0 < j < n - 1]

    same_parity = np.arange(parity, n, 2)
    center = same_parity[
        (same_parity >= 0.4 * n) & (same_parity <= 0.6 * n)
    ]
    if center.size == 0:
        center = same_parity[len(same_parity) // 2 : len(same_parity) // 2 + 1]
    bulk = float(p[center].mean())

    resid = p[np.array(sites, dtype=int)] - bulk if sites else np.array([])
    usable = [
        (j, abs(r)) for j, r in zip(sites, np.atleast_1d(resid)) if abs(r) > NOISE_FLOOR
    ]
    if len(usable) < 4:
        raise FitRejected(
            f"fewer than 4 sites of parity {parity} above the noise floor "
            f"(profile flat or region too small)"
        )
    js = np.array([j for j, _ in usable], dtype=float)
    ys = np.log(np.array([r for _, r in usable]))
    increases = np.diff(ys)
    if increases.size and float(increases.max()) > monotonic_tol:
        raise FitRejected(
            f"log residuals increase by {increases.max():.3f} (> {monotonic_tol}); "
            "profile does not decay exponentially over the region"
        )
    # least squares y = a + b j, xi = -1/b (in units of the lattice period)
    coeffs, cov = np.polyfit(js, ys, 1, cov=True)
    slope = coeffs[0]
    if slope >= 0:
        raise FitRejected("non-decaying profile: fitted slope is non-negative")
    slope_err = float(np.sqrt(cov[0, 0]))
    xi = -1.0 / slope
    return CorrelationFit(
        xi=xi,
        stderr=slope_err / slope**2,
        bulk_value=bulk,
        sites=js.astype(int),
        residuals=ys - (coeffs[1] + slope * js),
    )


def oscillation_amplitude(profile) -> np.ndarray:
    """Local period-2 amplitude |p_j - (p_{j-1} + p_{j+1})/2| for interior sites.

    Returns an array of length n - 2 covering sites 1 .. n-2.
    """
    p = _populations(profile)
    if p.size < 4:
        raise ValueError("oscillation amplitude needs at least 4 sites")
    return np.abs(p[1:-1] - 0.5 * (p[:-2] + p[2:]))


@dataclass
class ProfileComparison:
    max_abs: float
    mean_abs: float
    per_site: np.ndarray


def compare_profiles(p1, p2) -> ProfileComparison:
    """Elementwise deviation summary between two population profiles."""
    a, b = _populations(p1), _populations(p2)
    if a.shape != b.shape:
        raise ValueError(f"profile length mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    return ProfileComparison(
        max_abs=float(diff.max()) if diff.size else 0.0,
        mean_abs=float(diff.mean()) if diff.size else 0.0,
        per_site=diff,
    )
