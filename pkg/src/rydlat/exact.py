"""Numerically exact reference engine for small chains.

Builds the many-body Hamiltonian and jump operators of the driven chain and
integrates the Lindblad master equation

    drho/dt = -i [H, rho] + sum_j ( L_j rho L_j+  -  1/2 {L_j+ L_j, rho} )

with an adaptive embedded Runge-Kutta 4(5) stepper acting on the full density
matrix.  The Liouvillian is applied matrix-free (sparse operators times the
dense rho), never materialized as a d**2N superoperator, which keeps
three-level chains of 5-7 atoms feasible in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import RK45

from .model import (
    DriveScheme,
    FullVdW,
    HardCoreNN,
    LatticeModel,
    NonConvergenceError,
    SteadyProfile,
    build_lindblad_generators,
    build_site_hamiltonian,
    pair_energy,
    site_operators,
)

DT_SAFETY = 0.05  # dt <= DT_SAFETY / max(rates); guards stiffness from large U


@dataclass
class DenseState:
    """Full many-body density matrix for a small chain."""

    rho: np.ndarray
    time: float = 0.0

    def trace(self) -> complex:
        return np.trace(self.rho)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def renormalized(self) -> "DenseState":
        return DenseState(self.rho / np.real(np.trace(self.rho)), self.time)


def ground_state(model: LatticeModel, scheme: DriveScheme) -> DenseState:
    """All atoms in |g>, the default initial state."""
    dim = scheme.local_dim**model.n_sites
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return DenseState(rho)


def all_rydberg_state(model: LatticeModel, scheme: DriveScheme) -> DenseState:
    """All atoms in |r>; used for attractor checks."""
    dim = scheme.local_dim**model.n_sites
    rho = np.zeros((dim, dim), dtype=complex)
    rho[dim - 1, dim - 1] = 1.0
    return DenseState(rho)


def _embed(op: np.ndarray, site: int, n_sites: int, local_dim: int) -> sp.csr_matrix:
    """Kronecker-embed a local operator at `site` (site 0 = leftmost factor)."""
    left = sp.identity(local_dim**site, format="csr", dtype=complex)
    right = sp.identity(local_dim ** (n_sites - site - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def _rydberg_masks(n_sites: int, local_dim: int) -> np.ndarray:
    """masks[j][k] is True when basis state k has site j in the Rydberg level."""
    dim = local_dim**n_sites
    idx = np.arange(dim)
    masks = np.empty((n_sites, dim), dtype=bool)
    for j in range(n_sites):
        digit = (idx // local_dim ** (n_sites - 1 - j)) % local_dim
        masks[j] = digit == local_dim - 1
    return masks


def build_many_body_hamiltonian(model: LatticeModel, scheme: DriveScheme) -> sp.csr_matrix:
    """Sum of single-site drive terms and pairwise sigma_rr x sigma_rr interactions."""
    if isinstance(model.potential, HardCoreNN):
        raise ValueError(
            "HardCoreNN is a constraint, not an energy; use the rate-equation engine"
        )
    n, d = model.n_sites, scheme.local_dim
    h_site = build_site_hamiltonian(scheme)
    ham = sp.csr_matrix((d**n, d**n), dtype=complex)
    for j in range(n):
        ham = ham + _embed(h_site, j, n, d)
    # interaction part is diagonal: add it via the occupation masks
    masks = _rydberg_masks(n, d)
    diag = np.zeros(d**n)
    for i in range(n):
        for j in range(i + 1, n):
            u = pair_energy(model, i, j)
            if u != 0.0:
                diag += u * (masks[i] & masks[j])
    ham = ham + sp.diags(diag.astype(complex), format="csr")
    ham.sum_duplicates()
    return ham


DENSE_DIM_LIMIT = 32  # below this, dense operator algebra beats sparse overhead


class LiouvilleOperator:
    """Precomputed operators for fast repeated application of the Lindblad RHS."""

    def __init__(self, model: LatticeModel, scheme: DriveScheme):
        self.model = model
        self.scheme = scheme
        self.n_sites = model.n_sites
        self.local_dim = scheme.local_dim
        self.dim = self.local_dim**self.n_sites
        self.hamiltonian = build_many_body_hamiltonian(model, scheme)
        jumps = build_lindblad_generators(scheme)
        self.jump_ops = [
            _embed(l, j, self.n_sites, self.local_dim)
            for j in range(self.n_sites)
            for l in jumps
        ]
        self._jump_ops_dag = [op.conj().T.tocsr() for op in self.jump_ops]
        if self.dim <= DENSE_DIM_LIMIT:
            self.hamiltonian = self.hamiltonian.toarray()
            self.jump_ops = [op.toarray() for op in self.jump_ops]
            self._jump_ops_dag = [op.toarray() for op in self._jump_ops_dag]
        # L+L is diagonal for pure decay jumps; keep the summed diagonal
        decay = np.zeros(self.dim)
        for op in self.jump_ops:
            decay += np.real((op.conj().T @ op).diagonal())
        self.decay_diag = decay
        self.masks = _rydberg_masks(self.n_sites, self.local_dim)
        self.max_rate = self._max_rate()

    def _max_rate(self) -> float:
        s = self.scheme
        rates = [abs(s.delta)]
        if s.local_dim == 2:
            rates += [s.omega_gr, s.gamma_rg]
        else:
            rates += [s.omega_ge, s.omega_er, s.gamma_eg]
        pot = self.model.potential
        if isinstance(pot, FullVdW):
            rates.append(pot.c6 / self.model.spacing**6)
        elif hasattr(pot, "u"):
            rates.append(pot.u)
        return max(rates + [1e-12])

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        # H is Hermitian, so the commutator uses the same sparse matrix twice
        out = -1j * (self.hamiltonian @ rho - rho @ self.hamiltonian)
        for op, op_dag in zip(self.jump_ops, self._jump_ops_dag):
            out += op @ (rho @ op_dag)
        out -= 0.5 * (self.decay_diag[:, None] * rho + rho * self.decay_diag[None, :])
        return out

    def populations(self, rho: np.ndarray) -> np.ndarray:
        diag = np.real(np.diag(rho))
        return self.masks @ diag

    def pair_correlation(self, rho: np.ndarray, j: int, k: int) -> float:
        diag = np.real(np.diag(rho))
        return float(diag[self.masks[j] & self.masks[k]].sum())

    def profile(self, state: DenseState, pairs=(), extra_metadata=None) -> SteadyProfile:
        tr = np.real(state.trace())
        rho = state.rho / tr
        meta = {
            "engine": "exact",
            "time": state.time,
            "trace_drift": abs(tr - 1.0),
            "n_sites": self.n_sites,
        }
        if extra_metadata:
            meta.update(extra_metadata)
        return SteadyProfile(
            populations=self.populations(rho),
            pair_correlations={(j, k): self.pair_correlation(rho, j, k) for j, k in pairs},
            metadata=meta,
        )


def lindblad_rhs(model: LatticeModel, scheme: DriveScheme, rho) -> np.ndarray:
    """Right-hand side of the master equation for a single density matrix."""
    matrix = rho.rho if isinstance(rho, DenseState) else np.asarray(rho)
    op = LiouvilleOperator(model, scheme)
    if matrix.shape != (op.dim, op.dim):
        raise ValueError(
            f"rho has shape {matrix.shape}, expected {(op.dim, op.dim)}"
        )
    return op.rhs(matrix)


@dataclass
class IntegrationLog:
    """Per-run integrator diagnostics."""

    steps: int = 0
    max_trace_drift: float = 0.0
    times: list = field(default_factory=list)
    max_rates: list = field(default_factory=list)


class _Integrator:
    """Adaptive RK45 wrapper with per-step trace-drift monitoring.

    The safety bound DT_SAFETY / max(rates) caps the initial trial step;
    afterwards the embedded 4(5) error controller owns the step size (a
    hard per-step cap at that bound makes slow three-level relaxations
    pathologically expensive while adding no accuracy).
    """

    def __init__(self, op: LiouvilleOperator, state: DenseState, rtol=1e-8, atol=1e-10):
        self.op = op
        self.shape = state.rho.shape
        self.first_step = DT_SAFETY / op.max_rate
        self.rtol = rtol
        self.atol = atol
        self.log = IntegrationLog()
        self._diag_idx = np.arange(self.shape[0]) * (self.shape[0] + 1)
        self._make_stepper(state.rho.ravel(), state.time)

    def _make_stepper(self, y, t):
        self._stepper = RK45(
            lambda _t, yy: self.op.rhs(yy.reshape(self.shape)).ravel(),
            t,
            y,
            t_bound=np.inf,
            first_step=self.first_step,
            rtol=self.rtol,
            atol=self.atol,
        )

    @property
    def time(self) -> float:
        return self._stepper.t

    def state(self) -> DenseState:
        return DenseState(self._stepper.y.reshape(self.shape).copy(), self._stepper.t)

    def advance_to(self, t_target: float) -> None:
        while self._stepper.t < t_target:
            self._stepper.t_bound = t_target
            if self._stepper.status == "finished":
                self._stepper.status = "running"
            self._stepper.step()
            if self._stepper.status == "failed":
                raise RuntimeError(
                    f"integrator step failed at t={self._stepper.t:.6g} "
                    "(step-size underflow)"
                )
            self.log.steps += 1
            drift = abs(self._stepper.y[self._diag_idx].sum() - 1.0)
            self.log.max_trace_drift = max(self.log.max_trace_drift, drift)


def evolve(
    model: LatticeModel,
    scheme: DriveScheme,
    rho0: DenseState | None = None,
    t_final: float = 10.0,
    snapshot_times=None,
    pairs=(),
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> list[SteadyProfile]:
    """Integrate the master equation and return profiles at the snapshot times."""
    op = LiouvilleOperator(model, scheme)
    state = rho0 if rho0 is not None else ground_state(model, scheme)
    snaps = (
        np.asarray(snapshot_times, dtype=float)
        if snapshot_times is not None
        else np.linspace(state.time, t_final, 21)
    )
    integ = _Integrator(op, state, rtol=rtol, atol=atol)
    out = []
    for t in snaps:
        if t > integ.time:
            integ.advance_to(t)
        snap = integ.state()
        out.append(
            op.profile(
                snap,
                pairs,
                extra_metadata={"max_trace_drift": integ.log.max_trace_drift},
            )
        )
    return out


def steady_state(
    model: LatticeModel,
    scheme: DriveScheme,
    tol: float = 1e-8,
    t_max: float = 5000.0,
    probe: float = 1.0,
    rho0: DenseState | None = None,
    pairs=(),
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> SteadyProfile:
    """Integrate until the per-site population rate of change falls below tol.

    The criterion is max_j |p_j(t + probe) - p_j(t)| / probe < tol; on
    success the profile metadata carries the convergence report, on failure a
    NonConvergenceError with the last profile is raised.
    """
    op = LiouvilleOperator(model, scheme)
    state = rho0 if rho0 is not None else ground_state(model, scheme)
    integ = _Integrator(op, state, rtol=rtol, atol=atol)
    prev = op.populations(state.rho / np.real(np.trace(state.rho)))
    while integ.time < t_max + state.time:
        integ.advance_to(min(integ.time + probe, t_max + state.time))
        snap = integ.state()
        pops = op.populations(snap.rho / np.real(np.trace(snap.rho)))
        rate = float(np.max(np.abs(pops - prev))) / probe
        integ.log.times.append(snap.time)
        integ.log.max_rates.append(rate)
        prev = pops
        if rate < tol:
            return op.profile(
                snap,
                pairs,
                extra_metadata={
                    "converged": True,
                    "convergence_tol": tol,
                    "probe_window": probe,
                    "final_rate": rate,
                    "steps": integ.log.steps,
                    "max_trace_drift": integ.log.max_trace_drift,
                },
            )
    snap = integ.state()
    profile = op.profile(
        snap,
        pairs,
        extra_metadata={
            "converged": False,
            "convergence_tol": tol,
            "final_rate": integ.log.max_rates[-1] if integ.log.max_rates else math.nan,
            "steps": integ.log.steps,
            "max_trace_drift": integ.log.max_trace_drift,
        },
    )
    raise NonConvergenceError(
        f"no steady state within t_max={t_max} (last rate "
        f"{profile.metadata['final_rate']:.3e}, tol {tol:.1e})",
        profile,
    )
