"""Dense density-matrix reference for the boundary-dephased chain.

Two independent references for the trajectory engines:

``integrate_lindblad``
    Adaptive DOP853 integration of
    ``d rho/dt = -i[H0, rho] - g^2 [S1z, [S1z, rho]] - g1^2 [X, [X, rho]]``.
``trotter_average``
    The exact noise average of the discrete kicked map, i.e. the Gaussian
    average of ``e^{-i theta X} rho e^{i theta X}`` applied after every
    ``exp(-i tau H0)``.

Averaging a kick of angle ``gamma * eta`` with ``<eta^2> = tau`` multiplies
coherences between X-eigenvalues x, x' by ``exp(-gamma^2 tau (x - x')^2 / 2)``,
which is the double-commutator dissipator with coupling ``gamma / sqrt(2)``.
:func:`unraveled_couplings` performs that conversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvalidArgument, InvalidState, NumericalFailure, ResourceLimit
from .model import (ChainConfig, DisorderSample, boundary_operators, build_h0, neel_vector)

SECTOR_CAP = 1000
FULL_CAP = 256
RTOL = 1e-11  # keeps rank-deficient (pure) states inside POSITIVITY_TOL
ATOL = 1e-14
POSITIVITY_TOL = 1e-10
BATCH = 32


def unraveled_couplings(cfg: ChainConfig) -> tuple[float, float]:
    """Lindblad couplings reproduced by the kicked unitary scheme."""
    return cfg.gamma / np.sqrt(2.0), cfg.gamma1 / np.sqrt(2.0)


def _comm(op, rho, diag=None):
    if diag is not None:
        return (diag[:, None] - diag[None, :]) * rho
    return op @ rho - rho @ op


def _diag_or_none(op):
    d = np.diagonal(op)
    return d.real.copy() if np.count_nonzero(op - np.diag(d)) == 0 else None


def lindblad_rhs(rho, H0, gamma, gamma1=0.0, *, sz1, nc_op=None):
    """Right-hand side for ``rho`` of shape (..., d, d); H0 may be batched alike."""
    out = -1j * (H0 @ rho - rho @ H0)
    if gamma:
        dz = _diag_or_none(sz1)
        out -= gamma**2 * _comm(sz1, _comm(sz1, rho, dz), dz)
    if gamma1:
        if nc_op is None:
            raise ValueError("gamma1 > 0 needs the nonconserving operator")
        out -= gamma1**2 * _comm(nc_op, _comm(nc_op, rho))
    return out


def _fast_rhs(H, gamma, gamma1, sz1, nc_op, shape):
    """Same right-hand side specialised to real H and Hermitian rho.

    [H, rho] = X - X^dagger with X = H rho, and H rho is one real product on
    the interleaved float view of rho.
    """
    Hr = np.ascontiguousarray(H.real)
    if np.abs(H.imag).max() > 0:
        raise InvalidArgument("fast path needs a real Hamiltonian")
    dz = _diag_or_none(sz1)
    gap2 = None if dz is None else gamma**2 * (dz[:, None] - dz[None, :]) ** 2

    def rhs(_t, y):
        rho = y.reshape(shape)
        X = np.matmul(Hr, rho.view(np.float64)).view(np.complex128)
        out = -1j * (X - np.conj(np.swapaxes(X, -1, -2)))
        if gamma:
            if gap2 is not None:
                out -= gap2 * rho
            else:
                out -= gamma**2 * _comm(sz1, _comm(sz1, rho))
        if gamma1:
            out -= gamma1**2 * _comm(nc_op, _comm(nc_op, rho))
        return out.ravel()

    return rhs


def oracle_basis_check(cfg: ChainConfig):
    from math import comb

    if cfg.conserving:
        d = comb(cfg.L, cfg.L // 2)
        if d > SECTOR_CAP:
            raise ResourceLimit(f"oracle refused: sector dimension {d} > {SECTOR_CAP}")
    else:
        d = 2**cfg.L
        if d > FULL_CAP:
            raise ResourceLimit(f"oracle refused: full-basis dimension {d} > {FULL_CAP}")
    return d


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray
    time: float = 0.0

    def check(self, tol: float = POSITIVITY_TOL):
        rho = self.rho
        if abs(np.trace(rho) - 1) > tol:
            raise InvalidState("density matrix trace differs from 1")
        if np.abs(rho - rho.conj().T).max() > tol:
            raise InvalidState("density matrix is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
            raise InvalidState("density matrix is not positive semidefinite")
        return self


@dataclass(frozen=True)
class OracleResult:
    times: np.ndarray
    mags: np.ndarray  # (n_times, L) or (n_disorder, n_times, L)
    trace_defect: float
    hermiticity_defect: float
    min_eigenvalue: float


def _nc_operator(cfg, ops):
    if cfg.conserving:
        return None
    return ops["pair"] if cfg.nonconserving == "pair" else ops["sx1"]


def _diagnose(rho_t):
    tr = np.trace(rho_t, axis1=-2, axis2=-1)
    herm = np.abs(rho_t - np.conj(np.swapaxes(rho_t, -1, -2))).max()
    hsym = 0.5 * (rho_t + np.conj(np.swapaxes(rho_t, -1, -2)))
    return float(np.abs(tr - 1).max()), float(herm), float(np.linalg.eigvalsh(hsym).min())


def integrate_lindblad(rho0, cfg: ChainConfig, disorder, t_final: float, sample_times=None, *,
                       couplings=None, rtol: float = RTOL, atol: float = ATOL,
                       positivity_tol: float = POSITIVITY_TOL,
                       batch_size: int = BATCH) -> OracleResult:
    """Integrate the master equation for one disorder sample or a sequence of them.

    ``rho0`` may be None (Neel state), a :class:`DensityMatrix` or a d x d
    array.  ``couplings`` overrides the (gamma, gamma1) entering the
    dissipator; by default they are the ones reproduced by the trajectory
    unraveling.  Magnetizations come back as (n_times, L), or
    (n_disorder, n_times, L) when ``disorder`` is a sequence.  Sequences are
    integrated ``batch_size`` at a time as one stacked ODE, small enough that
    the solver's RMS error norm still controls every member.
    """
    single = isinstance(disorder, DisorderSample)
    disorders = [disorder] if single else list(disorder)
    if not disorders:
        raise InvalidArgument("no disorder samples given")
    oracle_basis_check(cfg)
    gamma, gamma1 = unraveled_couplings(cfg) if couplings is None else couplings
    if sample_times is None:
        sample_times = np.linspace(0.0, t_final, 101)
    times = np.asarray(sample_times, dtype=np.float64)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > t_final + 1e-12:
        raise InvalidArgument("sample times must be ascending inside [0, t_final]")

    mags, tr, herm, lam = [], 0.0, 0.0, np.inf
    for start in range(0, len(disorders), max(1, int(batch_size))):
        chunk = disorders[start:start + max(1, int(batch_size))]
        m, diag = _integrate_batch(rho0, cfg, chunk, t_final, times, gamma, gamma1, rtol, atol)
        mags.append(m)
        tr, herm, lam = max(tr, diag[0]), max(herm, diag[1]), min(lam, diag[2])
        if lam < -positivity_tol:
            raise NumericalFailure(f"density matrix lost positivity (min eigenvalue {lam:.3e})")
    mags = np.concatenate(mags)
    return OracleResult(times, mags[0] if single else mags, tr, herm, lam)


def _integrate_batch(rho0, cfg, disorders, t_final, times, gamma, gamma1, rtol, atol):
    hams = [build_h0(cfg, dis, dense=True) for dis in disorders]
    basis = hams[0].basis
    d = basis.dim
    H = np.stack([h.toarray() for h in hams]).astype(np.complex128)
    ops = boundary_operators(basis)
    nc = _nc_operator(cfg, ops)
    if rho0 is None:
        psi0 = neel_vector(basis)
        rho0 = np.outer(psi0, psi0.conj())
    elif isinstance(rho0, DensityMatrix):
        rho0 = rho0.rho
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (d, d):
        raise InvalidArgument(f"initial density matrix must be {d} x {d}")
    DensityMatrix(rho0).check()
    rho0 = np.broadcast_to(rho0, (len(hams), d, d)).copy()
    shape = rho0.shape
    rhs = _fast_rhs(H, gamma, gamma1, ops["sz1"], nc, shape)
    if t_final > 0 and times[-1] > 0:
        sol = solve_ivp(rhs, (0.0, float(times[-1])), rho0.ravel(), method="DOP853",
                        t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericalFailure(f"Lindblad integration failed: {sol.message}")
        rho_t = sol.y.T.reshape((times.size,) + shape)
    else:
        rho_t = np.broadcast_to(rho0, (times.size,) + shape)
    spins = basis.spins()
    diag = np.real(np.diagonal(rho_t, axis1=-2, axis2=-1))  # (T, R, d)
    return np.einsum("trd,dl->rtl", diag, spins), _diagnose(rho_t)


def _averaged_kick(op, variance):
    """Superoperator factors for the Gaussian average of exp(-i theta op)."""
    x, vec = np.linalg.eigh(op)
    damp = np.exp(-0.5 * variance * (x[:, None] - x[None, :]) ** 2)
    return vec, damp


def trotter_average(cfg: ChainConfig, disorder: DisorderSample, tau: float, record_steps):
    """Exact noise average of the kicked evolution, as per-site magnetizations.

    Applies, per step, ``exp(-i tau H0)`` and then the averaged kicks in the
    same order as the trajectory engines.
    """
    oracle_basis_check(cfg)
    ham = build_h0(cfg, disorder, dense=True)
    basis = ham.basis
    E, V = np.linalg.eigh(ham.toarray())
    prop = (V * np.exp(-1j * tau * E)) @ V.T
    ops = boundary_operators(basis)
    kicks = []
    z = _averaged_kick(ops["sz1"], cfg.gamma**2 * tau)
    nc = _nc_operator(cfg, ops)
    if nc is not None:
        k2 = _averaged_kick(nc, cfg.gamma1**2 * tau)
        kicks = [k2, z] if cfg.nonconserving == "pair" else [z, k2]
    else:
        kicks = [z]
    psi0 = neel_vector(basis)
    rho = np.outer(psi0, psi0.conj())
    steps = np.asarray(record_steps, dtype=np.int64)
    spins = basis.spins()
    mags = np.empty((steps.size, cfg.L))
    k = 0
    n = 0
    while k < steps.size:
        if steps[k] == n:
            mags[k] = np.real(np.diagonal(rho)) @ spins
            k += 1
            continue
        rho = prop @ rho @ prop.conj().T
        for vec, damp in kicks:
            rho = vec @ ((vec.conj().T @ rho @ vec) * damp) @ vec.conj().T
        n += 1
    return mags
