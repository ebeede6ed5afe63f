"""Many-body trajectory engine for the kicked XXZ chain.

One step is ``U_n = exp(-i gamma eta_n S1^z) exp(-i tau H0)``; with a
nonconserving channel the extra boundary kick is inserted as in the
corresponding Trotter products:

* pair channel: ``e^{z} e^{pair} e^{H0}``
* x channel:    ``e^{x} e^{z} e^{H0}``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import InvalidArgument, InvalidState, NumericalFailure, ResourceLimit
from .model import (DENSE_CAP, Basis, ChainConfig, DisorderSample, ManyBodyHamiltonian,
                    build_h0, neel_vector)
from .noise import NoiseTrace
from .records import TrajectoryRecord

KRYLOV_TOL = 1e-10
NORM_TOL = 1e-8
CHEB_TOL = 1e-15
# above this sector dimension "auto" prefers the sparse polynomial step
POLY_MIN_DIM = 512


@dataclass
class ManyBodyState:
    amplitudes: np.ndarray
    basis: Basis
    time: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def lanczos_expm(H, v, dt, tol=KRYLOV_TOL, m_max=40):
    """exp(-i dt H) v by Lanczos projection with an a-posteriori error estimate.

    Splits ``dt`` in halves when the Krylov space does not converge within
    ``m_max`` vectors.
    """
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return v.copy()
    n = v.shape[0]
    m_max = min(m_max, n)
    basis = np.empty((m_max + 1, n), dtype=np.complex128)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    basis[0] = v / beta0
    for m in range(m_max):
        w = H @ basis[m]
        alpha[m] = np.vdot(basis[m], w).real
        w = w - alpha[m] * basis[m]
        if m > 0:
            w = w - beta[m - 1] * basis[m - 1]
        # full reorthogonalization; m stays small
        w -= basis[: m + 1].T @ (basis[: m + 1].conj() @ w)
        beta[m] = np.linalg.norm(w)
        T = np.diag(alpha[: m + 1]) + np.diag(beta[:m], 1) + np.diag(beta[:m], -1)
        evals, evecs = np.linalg.eigh(T)
        coef = evecs @ (np.exp(-1j * dt * evals) * evecs[0])
        err = beta[m] * abs(coef[-1])
        if err < tol or beta[m] < 1e-14 or m + 1 == n:
            return beta0 * (coef @ basis[: m + 1])
        basis[m + 1] = w / beta[m]
    half = lanczos_expm(H, v, dt / 2, tol / 2, m_max)
    return lanczos_expm(H, half, dt / 2, tol / 2, m_max)


def spectral_bounds(H) -> tuple:
    """Gershgorin interval [lo, hi] containing the spectrum of a real symmetric CSR matrix."""
    H = sp.csr_matrix(H)
    diag = H.diagonal()
    off = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(diag)
    return float((diag - off).min()), float((diag + off).max())


def chebyshev_coefficients(tau: float, radius: float, tol: float = CHEB_TOL) -> np.ndarray:
    """Coefficients c_k of exp(-i tau r x) = sum c_k T_k(x) on [-1, 1], truncated once negligible."""
    from scipy.special import jv

    z = tau * radius
    n = int(np.ceil(z + 10 * np.log10(1 + z) + 25))
    k = np.arange(n + 1)
    c = (2.0 - (k == 0)) * (-1j) ** k * jv(k, z)
    # the series converges superexponentially once k > z
    tail = np.abs(c)[::-1].cumsum()[::-1]
    keep = int(np.argmax(tail < tol)) if np.any(tail < tol) else n + 1
    return np.ascontiguousarray(c[:max(keep, 2)])


@dataclass
class Propagator:
    """exp(-i tau H0): precomputed densely, or applied by a Chebyshev series or Lanczos."""

    mode: str
    tau: float
    hamiltonian: ManyBodyHamiltonian
    energies: np.ndarray | None = None
    vectors: np.ndarray | None = None
    tol: float = KRYLOV_TOL
    _matrix: np.ndarray | None = None
    center: float = 0.0
    radius: float = 1.0
    coeffs: np.ndarray | None = None

    @property
    def matrix(self) -> np.ndarray:
        if self.mode != "dense":
            raise InvalidState(f"{self.mode} propagator has no stored matrix")
        if self._matrix is None:
            self._matrix = np.ascontiguousarray(
                (self.vectors * np.exp(-1j * self.tau * self.energies)) @ self.vectors.T)
        return self._matrix

    def apply(self, psi: np.ndarray, dt: float | None = None) -> np.ndarray:
        dt = self.tau if dt is None else dt
        if self.mode == "dense":
            if dt == self.tau:
                return self.matrix @ psi
            return self.vectors @ (np.exp(-1j * dt * self.energies) * (self.vectors.T @ psi))
        if self.mode == "chebyshev" and dt == self.tau:
            return self._poly(psi)
        return lanczos_expm(self.hamiltonian.matrix, psi, dt, self.tol)


    def _poly(self, psi):
        H = self.hamiltonian.matrix
        t0 = psi
        t1 = (H @ psi - self.center * psi) / self.radius
        acc = self.coeffs[0] * t0 + self.coeffs[1] * t1
        for c in self.coeffs[2:]:
            t0, t1 = t1, 2.0 * (H @ t1 - self.center * t1) / self.radius - t0
            acc = acc + c * t1
        return np.exp(-1j * self.tau * self.center) * acc


def make_propagator(H0: ManyBodyHamiltonian, tau: float, mode: str = "auto",
                    tol: float = KRYLOV_TOL) -> Propagator:
    """``auto`` diagonalizes small problems and switches to the Chebyshev step
    above POLY_MIN_DIM, where a dense matvec per step costs more than a few
    dozen sparse ones; Lanczos remains available for arbitrary time steps."""
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    if mode == "auto":
        mode = "dense" if H0.dim <= POLY_MIN_DIM else "chebyshev"
    if mode == "chebyshev":
        H = sp.csr_matrix(H0.tosparse(), dtype=np.float64)
        H.sort_indices()
        H.indptr = H.indptr.astype(np.int32)
        H.indices = H.indices.astype(np.int32)
        lo, hi = spectral_bounds(H)
        center, radius = 0.5 * (hi + lo), max(0.5 * (hi - lo), 1e-12)
        return Propagator("chebyshev", tau, ManyBodyHamiltonian(H0.basis, H), tol=tol,
                          center=center, radius=radius,
                          coeffs=chebyshev_coefficients(tau, radius))
    if mode == "dense":
        if H0.dim > DENSE_CAP:
            raise ResourceLimit(f"dense propagator refused for dimension {H0.dim} > {DENSE_CAP}")
        energies, vectors = np.linalg.eigh(H0.toarray())
        return Propagator("dense", tau, H0, energies, np.ascontiguousarray(vectors))
    if mode == "krylov":
        return Propagator("krylov", tau, ManyBodyHamiltonian(H0.basis, H0.tosparse()), tol=tol)
    raise InvalidArgument(f"unknown propagator mode {mode!r}")


def _site1_up(basis: Basis) -> np.ndarray:
    return (basis.states & 1).astype(np.uint8)


def kick_z(state: ManyBodyState, angle: float) -> ManyBodyState:
    """exp(-i angle S1^z): phase exp(-+i angle/2) on site-1 up/down amplitudes."""
    up = _site1_up(state.basis).astype(bool)
    phase = np.where(up, np.exp(-0.5j * angle), np.exp(0.5j * angle))
    return ManyBodyState(phase * state.amplitudes, state.basis, state.time)


def _rotation_pairs(basis: Basis, channel: str):
    states = basis.states
    if channel == "x":
        a = states[(states & 1) == 0]
        return a, a | 1, 0.5
    if channel == "pair":
        a = states[(states & 3) == 0]
        return a, a | 3, 1.0
    raise InvalidArgument(f"unknown channel {channel!r}")


def _rotate(state: ManyBodyState, angle: float, channel: str) -> ManyBodyState:
    if state.basis.is_sector:
        raise InvalidState(f"{channel} kick leaves the S^z_tot sector; use the full basis")
    a, b, scale = _rotation_pairs(state.basis, channel)
    c, s = np.cos(scale * angle), np.sin(scale * angle)
    psi = state.amplitudes.copy()
    psi[a] = c * state.amplitudes[a] - 1j * s * state.amplitudes[b]
    psi[b] = c * state.amplitudes[b] - 1j * s * state.amplitudes[a]
    return ManyBodyState(psi, state.basis, state.time)


def kick_x(state: ManyBodyState, angle: float) -> ManyBodyState:
    """exp(-i angle S1^x) on a full-basis state."""
    return _rotate(state, angle, "x")


def kick_pair(state: ManyBodyState, angle: float) -> ManyBodyState:
    """exp(-i angle (S1+S2+ + S1-S2-)) on a full-basis state."""
    return _rotate(state, angle, "pair")


def trotter_step(state: ManyBodyState, prop: Propagator, cfg: ChainConfig,
                 eta: float, eta2: float | None = None) -> ManyBodyState:
    """One step of the kicked evolution; reference path for the kernels."""
    st = ManyBodyState(prop.apply(state.amplitudes), state.basis, state.time + prop.tau)
    if eta2 is not None and cfg.nonconserving == "pair":
        st = kick_pair(st, cfg.gamma1 * eta2)
    st = kick_z(st, cfg.gamma * eta)
    if eta2 is not None and cfg.nonconserving == "x":
        st = kick_x(st, cfg.gamma1 * eta2)
    return st


def _check_steps(record_steps, kicks):
    steps = np.asarray(record_steps, dtype=np.int64)
    if steps.ndim != 1 or np.any(np.diff(steps) <= 0) or (steps.size and steps[0] < 0):
        raise InvalidArgument("record steps must be strictly ascending and non-negative")
    if kicks is not None and steps.size and steps[-1] > kicks.steps:
        raise InvalidArgument("noise trace shorter than the last record step")
    return steps


def _noiseless(prop: Propagator, psi0, steps, spins):
    """Exact unkicked evolution evaluated directly at the record times."""
    mags = np.empty((steps.size, spins.shape[1]))
    if prop.mode != "dense" and prop.hamiltonian.dim <= DENSE_CAP:
        # one diagonalization beats stepping across long record gaps
        prop = make_propagator(prop.hamiltonian, prop.tau, "dense")
    if prop.mode == "dense":
        coeffs = prop.vectors.T @ psi0
        for k, n in enumerate(steps):
            x = prop.vectors @ (np.exp(-1j * n * prop.tau * prop.energies) * coeffs)
            mags[k] = np.abs(x) ** 2 @ spins
        return mags, 0.0
    psi, last, drift = psi0.copy(), 0, 0.0
    for k, n in enumerate(steps):
        if n > last:
            psi = prop.apply(psi, (n - last) * prop.tau)
            last = n
        p = np.abs(psi) ** 2
        drift = max(drift, abs(p.sum() - 1.0))
        mags[k] = p @ spins
    return mags, drift


def evolve_trajectory(cfg: ChainConfig, disorder: DisorderSample, kicks: NoiseTrace | None,
                      record_steps, tau: float = 0.05, mode: str = "auto",
                      propagator: Propagator | None = None) -> TrajectoryRecord:
    """Per-site magnetizations of one trajectory started from the Neel state.

    ``kicks=None`` (or ``gamma == gamma1 == 0``) gives the noiseless reference
    evolution, evaluated exactly at the record times.
    """
    disorder.check(cfg)
    steps = _check_steps(record_steps, kicks)
    if kicks is not None and abs(kicks.tau - tau) > 1e-15:
        raise InvalidArgument("noise trace step differs from tau")
    noisy = kicks is not None and (cfg.gamma > 0 or cfg.gamma1 > 0)
    if propagator is None:
        propagator = make_propagator(build_h0(cfg, disorder), tau, mode)
    prop = propagator
    basis = prop.hamiltonian.basis
    if not cfg.conserving and basis.is_sector:
        raise InvalidState("nonconserving noise needs a full-basis Hamiltonian")
    spins = np.ascontiguousarray(basis.spins())
    psi0 = neel_vector(basis)

    if not noisy:
        mags, drift = _noiseless(prop, psi0, steps, spins)
    else:
        angles = np.ascontiguousarray(cfg.gamma * kicks.eta, dtype=np.float64)
        if prop.mode == "dense" and basis.is_sector:
            up = _site1_up(basis).astype(bool)
            vu = prop.vectors[up]
            mags, drift = kernels.ed_modal_z(
                np.exp(-1j * tau * prop.energies), prop.vectors,
                np.ascontiguousarray(vu.T @ vu), prop.vectors.T @ psi0,
                angles, steps, spins)
        else:
            if cfg.gamma1 > 0 and kicks.eta2 is not None:
                a, b, scale = _rotation_pairs(basis, cfg.nonconserving)
                rot = np.ascontiguousarray(kicks.eta2, dtype=np.float64)
                scale *= cfg.gamma1
            else:
                a = b = np.zeros(0, dtype=np.int64)
                rot, scale = None, 0.0
            if prop.mode == "dense":
                mags, drift = kernels.ed_site(
                    prop.matrix, psi0, _site1_up(basis), angles, a.astype(np.int64),
                    b.astype(np.int64), rot, scale, cfg.nonconserving == "pair", steps, spins)
            elif prop.mode == "chebyshev":
                H = prop.hamiltonian.matrix
                mags, drift = kernels.poly_site(
                    H.indptr, H.indices, H.data, prop.center, prop.radius, prop.coeffs,
                    complex(np.exp(-1j * tau * prop.center)), psi0.astype(np.complex128),
                    _site1_up(basis), angles, a.astype(np.int64), b.astype(np.int64), rot, scale,
                    cfg.nonconserving == "pair", steps, spins)
            else:
                mags, drift = _krylov_loop(prop, cfg, psi0, kicks, steps, spins)
    if drift > NORM_TOL:
        raise NumericalFailure(f"norm drift {drift:.3e} exceeds {NORM_TOL:g} "
                               f"(L={cfg.L}, W={cfg.W}, mode={prop.mode})")
    return TrajectoryRecord(steps, tau, mags, drift)


def _krylov_loop(prop, cfg, psi0, kicks, steps, spins):
    state = ManyBodyState(psi0.copy(), prop.hamiltonian.basis)
    mags = np.empty((steps.size, spins.shape[1]))
    drift, k = 0.0, 0
    while k < steps.size and steps[k] == 0:
        mags[k] = np.abs(state.amplitudes) ** 2 @ spins
        k += 1
    for n in range(steps[-1] if steps.size else 0):
        eta2 = None if kicks.eta2 is None else kicks.eta2[n]
        state = trotter_step(state, prop, cfg, kicks.eta[n], eta2)
        while k < steps.size and steps[k] == n + 1:
            p = np.abs(state.amplitudes) ** 2
            mags[k] = p @ spins
            drift = max(drift, abs(p.sum() - 1.0))
            k += 1
    return mags, drift


def sparse_commutes_with_sz(H0: ManyBodyHamiltonian) -> float:
    """max |[H0, S^z_tot]|, zero when H0 conserves the magnetization."""
    sz = sp.diags(H0.basis.spins().sum(axis=1))
    c = H0.tosparse() @ sz - sz @ H0.tosparse()
    return float(abs(c).max()) if c.nnz else 0.0


def unitarity_defect(prop: Propagator) -> float:
    P = prop.matrix
    return float(np.abs(P.conj().T @ P - np.eye(P.shape[0])).max())


__all__ = [
    "ManyBodyState", "Propagator", "make_propagator", "lanczos_expm", "chebyshev_coefficients",
    "spectral_bounds", "kick_z", "kick_x",
    "kick_pair", "trotter_step", "evolve_trajectory",
]
