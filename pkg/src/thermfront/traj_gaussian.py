"""Free-fermion engines for the Anderson case (Delta = 0).

Spin up maps to an occupied site, so the Neel state |up down up ...> fills
the odd sites 1, 3, 5, ...  Number-conserving noise keeps the state a Slater
determinant described by an L x N orbital matrix W; the pairing noise needs
the Bogoliubov (U, V) description.

The public step functions work in the site basis.  The evolution drivers run
the same dynamics in the eigenbasis of Q, where exp(-i tau Q) is diagonal
and each boundary kick is a rank-one or rank-two update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument, NumericalFailure
from .model import BdgBlocks, ChainConfig, DisorderSample, build_single_particle
from .noise import NoiseTrace
from .records import TrajectoryRecord

REORTHO_EVERY = 1000
DRIFT_TOL = 1e-8


@dataclass
class GaussianState:
    W: np.ndarray  # (L, N), orthonormal columns
    time: float = 0.0

    def gram_defect(self) -> float:
        N = self.W.shape[1]
        return float(np.abs(self.W.conj().T @ self.W - np.eye(N)).max())


@dataclass
class BdgState:
    U: np.ndarray
    V: np.ndarray
    time: float = 0.0

    def constraint_defect(self) -> float:
        """Largest deviation of the stacked (U; V) columns from orthonormality."""
        L = self.U.shape[1]
        g = self.U.conj().T @ self.U + self.V.conj().T @ self.V - np.eye(L)
        return float(np.abs(g).max())


@dataclass(frozen=True)
class SingleParticleEvolution:
    """Eigendecomposition of Q, shared read-only by all trajectories of a realization."""

    energies: np.ndarray
    vectors: np.ndarray
    tau: float

    @classmethod
    def from_matrix(cls, Q: np.ndarray, tau: float):
        e, v = np.linalg.eigh(Q)
        return cls(e, np.ascontiguousarray(v), tau)

    @property
    def phases(self) -> np.ndarray:
        return np.exp(-1j * self.tau * self.energies)

    def exp_q(self, t: float | None = None) -> np.ndarray:
        t = self.tau if t is None else t
        return (self.vectors * np.exp(-1j * t * self.energies)) @ self.vectors.T


def neel_w_matrix(L: int) -> GaussianState:
    """Column k occupies odd site 2k + 1 (1-based)."""
    if L % 2:
        raise InvalidArgument("L must be even")
    W = np.zeros((L, L // 2), dtype=np.complex128)
    W[np.arange(0, L, 2), np.arange(L // 2)] = 1.0
    return GaussianState(W)


def kick_matrix(angle: float, L: int) -> np.ndarray:
    """Diagonal of K_n: exp(-i angle) on site 1, ones elsewhere."""
    k = np.ones(L, dtype=np.complex128)
    k[0] = np.exp(-1j * angle)
    return k


def gaussian_step(state: GaussianState, exp_Q: np.ndarray, eta: float, gamma: float,
                  tau: float = 0.0) -> GaussianState:
    """W <- K_n exp(-i tau Q) W."""
    W = kick_matrix(gamma * eta, exp_Q.shape[0])[:, None] * (exp_Q @ state.W)
    out = GaussianState(W, state.time + tau)
    dev = out.gram_defect()
    if dev > DRIFT_TOL:
        raise NumericalFailure(f"orbital orthonormality drift {dev:.3e}")
    return out


def magnetizations_from_w(state: GaussianState) -> np.ndarray:
    W = state.W
    return (W.real**2 + W.imag**2).sum(axis=1) - 0.5


def reorthonormalize(state: GaussianState) -> GaussianState:
    q, r = np.linalg.qr(state.W)
    ph = np.diag(r) / np.abs(np.diag(r))
    return GaussianState(q * ph, state.time)


def bdg_neel(L: int) -> BdgState:
    """Quasiparticle vacuum equal to the Neel state.

    Empty sites give gamma = c_j (U column e_j), occupied sites give
    gamma = c_j^dagger (V column e_j).
    """
    if L % 2:
        raise InvalidArgument("L must be even")
    occ = np.zeros(L, dtype=bool)
    occ[0::2] = True
    U = np.diag((~occ).astype(np.complex128))
    V = np.diag(occ.astype(np.complex128))
    return BdgState(U, V)


def bdg_step(state: BdgState, exp_Q: np.ndarray, blocks: BdgBlocks, eta1: float, eta2: float,
             gamma: float, gamma1: float, tau: float = 0.0) -> BdgState:
    """(U; V) <- exp(-i g eta1 [[A,0],[0,-A]]) exp(-i g1 eta2 [[0,D],[-D,0]]) exp(-i tau [[Q,0],[0,-Q]]) (U; V).

    D = B - B^T.  The two kick factors are applied in closed form: the A-kick
    is a phase on row 1, and since [[0,D],[-D,0]]^2 projects onto rows 1-2
    of both blocks, exp(-i phi M) = 1 + (cos phi - 1) P12 - i sin phi M.
    """
    U = exp_Q @ state.U
    V = exp_Q.conj() @ state.V
    D = blocks.pairing
    phi = gamma1 * eta2
    if phi != 0.0:
        c1, s = np.cos(phi) - 1.0, np.sin(phi)
        P12 = -D @ D  # diag(1, 1, 0, ...)
        U, V = (U + c1 * (P12 @ U) - 1j * s * (D @ V),
                V + c1 * (P12 @ V) + 1j * s * (D @ U))
    a = gamma * eta1
    za = np.exp(-1j * a * np.diag(blocks.A))
    U = za[:, None] * U
    V = za.conj()[:, None] * V
    out = BdgState(U, V, state.time + tau)
    dev = out.constraint_defect()
    if dev > DRIFT_TOL:
        raise NumericalFailure(f"Bogoliubov constraint drift {dev:.3e}")
    return out


def magnetizations_from_bdg(state: BdgState) -> np.ndarray:
    V = state.V
    return (V.real**2 + V.imag**2).sum(axis=1) - 0.5


def _prepare(cfg: ChainConfig, disorder: DisorderSample, kicks, record_steps, tau):
    if cfg.Delta != 0:
        raise InvalidArgument("Gaussian engines require Delta = 0")
    disorder.check(cfg)
    steps = np.asarray(record_steps, dtype=np.int64)
    if steps.ndim != 1 or np.any(np.diff(steps) <= 0) or (steps.size and steps[0] < 0):
        raise InvalidArgument("record steps must be strictly ascending and non-negative")
    if kicks is not None:
        if steps.size and steps[-1] > kicks.steps:
            raise InvalidArgument("noise trace shorter than the last record step")
        if abs(kicks.tau - tau) > 1e-15:
            raise InvalidArgument("noise trace step differs from tau")
    sp = SingleParticleEvolution.from_matrix(build_single_particle(cfg, disorder), tau)
    return steps, sp


def _noiseless_w(sp: SingleParticleEvolution, W0: np.ndarray, steps) -> np.ndarray:
    coeff = sp.vectors.T @ W0
    mags = np.empty((steps.size, W0.shape[0]))
    for k, n in enumerate(steps):
        W = sp.vectors @ (np.exp(-1j * n * sp.tau * sp.energies)[:, None] * coeff)
        mags[k] = (W.real**2 + W.imag**2).sum(axis=1) - 0.5
    return mags


def evolve_gaussian(cfg: ChainConfig, disorder: DisorderSample, kicks: NoiseTrace | None,
                    record_steps, tau: float = 0.05,
                    reortho_every: int = REORTHO_EVERY) -> TrajectoryRecord:
    """Number-conserving Slater-determinant trajectory from the Neel state."""
    if cfg.gamma1 > 0:
        raise InvalidArgument("pairing noise needs evolve_bdg")
    steps, sp = _prepare(cfg, disorder, kicks, record_steps, tau)
    W0 = neel_w_matrix(cfg.L).W
    if kicks is None or cfg.gamma == 0:
        return TrajectoryRecord(steps, tau, _noiseless_w(sp, W0, steps))
    wt = np.ascontiguousarray(sp.vectors.T @ W0)
    angles = np.ascontiguousarray(cfg.gamma * kicks.eta, dtype=np.float64)
    mags, drift = kernels.gaussian_modal(sp.phases, sp.vectors, wt, angles, steps,
                                         int(reortho_every))
    if drift > DRIFT_TOL:
        raise NumericalFailure(f"orbital orthonormality drift {drift:.3e}")
    return TrajectoryRecord(steps, tau, mags, drift)


def evolve_bdg(cfg: ChainConfig, disorder: DisorderSample, kicks: NoiseTrace | None,
               record_steps, tau: float = 0.05,
               reortho_every: int = REORTHO_EVERY) -> TrajectoryRecord:
    """Bogoliubov trajectory with site-1 dephasing and 1-2 pairing noise."""
    if cfg.gamma1 > 0 and cfg.nonconserving != "pair":
        raise InvalidArgument("the BdG engine only supports the pair channel")
    steps, sp = _prepare(cfg, disorder, kicks, record_steps, tau)
    if kicks is None or (cfg.gamma == 0 and cfg.gamma1 == 0):
        return TrajectoryRecord(steps, tau, _noiseless_w(sp, neel_w_matrix(cfg.L).W, steps))
    init = bdg_neel(cfg.L)
    ut = np.ascontiguousarray(sp.vectors.T @ init.U)
    vt = np.ascontiguousarray(sp.vectors.T @ init.V)
    angles = np.ascontiguousarray(cfg.gamma * kicks.eta, dtype=np.float64)
    pair = None
    if cfg.gamma1 > 0 and kicks.eta2 is not None:
        pair = np.ascontiguousarray(cfg.gamma1 * kicks.eta2, dtype=np.float64)
    mags, drift = kernels.bdg_modal(sp.phases, sp.vectors, ut, vt, angles, pair, steps,
                                    int(reortho_every))
    if drift > DRIFT_TOL:
        raise NumericalFailure(f"Bogoliubov constraint drift {drift:.3e}")
    return TrajectoryRecord(steps, tau, mags, drift)
