"""Hamiltonians and basis machinery for the disordered XXZ chain.

Site ``j`` (1-based) is stored in bit ``j - 1`` of an integer configuration;
a set bit means spin up.  Bases are ordered by ascending integer value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument

DENSE_CAP = 4096
MAX_SITES = 24
NONCONSERVING_CHANNELS = ("pair", "x")


@dataclass(frozen=True)
class ChainConfig:
    """Physical parameters of one chain.

    ``gamma1`` is the strength of the particle-number nonconserving boundary
    noise; ``nonconserving`` selects its operator: ``"pair"`` for
    S1+S2+ + S1-S2-, ``"x"`` for S1^x.
    """

    L: int
    J: float = 1.0
    Delta: float = 1.0
    W: float = 0.0
    gamma: float = 1.0
    gamma1: float = 0.0
    nonconserving: str = "pair"

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 2 or self.L % 2:
            raise InvalidArgument(f"L must be an even integer >= 2, got {self.L!r}")
        if not self.J > 0:
            raise InvalidArgument("J must be positive")
        if self.W < 0 or self.gamma < 0 or self.gamma1 < 0:
            raise InvalidArgument("W, gamma and gamma1 must be non-negative")
        if self.nonconserving not in NONCONSERVING_CHANNELS:
            raise InvalidArgument(f"unknown nonconserving channel {self.nonconserving!r}")

    @property
    def conserving(self) -> bool:
        return self.gamma1 == 0

    def with_gamma(self, gamma, gamma1=None) -> "ChainConfig":
        from dataclasses import replace

        return replace(self, gamma=gamma, gamma1=self.gamma1 if gamma1 is None else gamma1)


@dataclass(frozen=True)
class DisorderSample:
    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def L(self) -> int:
        return self.h.shape[0]

    def check(self, cfg: ChainConfig):
        if self.L != cfg.L:
            raise InvalidArgument(f"disorder has {self.L} sites, chain has {cfg.L}")
        if np.any(np.abs(self.h) > cfg.W):
            raise InvalidArgument("disorder fields outside [-W, W]")


@dataclass(frozen=True)
class Basis:
    """Computational basis, either one S^z_tot sector (``n_up``) or the full space."""

    L: int
    n_up: int | None
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def is_sector(self) -> bool:
        return self.n_up is not None

    def index(self, configs):
        """Positions of ``configs`` in the basis; raises if any is absent."""
        configs = np.asarray(configs, dtype=np.int64)
        if not self.is_sector:
            return configs.copy()
        pos = np.searchsorted(self.states, configs)
        pos = np.clip(pos, 0, self.dim - 1)
        if np.any(self.states[pos] != configs):
            raise InvalidArgument("configuration outside the basis")
        return pos

    def bits(self) -> np.ndarray:
        """(dim, L) array of occupation bits, column j-1 for site j."""
        shifts = np.arange(self.L, dtype=np.int64)
        return ((self.states[:, None] >> shifts) & 1).astype(np.int8)

    def spins(self) -> np.ndarray:
        """(dim, L) array of S^z eigenvalues (+-1/2)."""
        return self.bits().astype(np.float64) - 0.5


SectorBasis = Basis


def build_sector_basis(L: int) -> Basis:
    if L % 2 or L < 2:
        raise InvalidArgument(f"sector basis needs even L >= 2, got {L}")
    if L > MAX_SITES:
        raise InvalidArgument(f"L={L} exceeds the supported maximum {MAX_SITES}")
    n_up = L // 2
    all_states = np.arange(1 << L, dtype=np.int64)
    counts = np.zeros(all_states.shape, dtype=np.int64)
    for j in range(L):
        counts += (all_states >> j) & 1
    states = all_states[counts == n_up]
    assert states.shape[0] == comb(L, n_up)
    states.setflags(write=False)
    return Basis(L, n_up, states)


def build_full_basis(L: int) -> Basis:
    if L < 1 or L > MAX_SITES:
        raise InvalidArgument(f"unsupported L={L}")
    states = np.arange(1 << L, dtype=np.int64)
    states.setflags(write=False)
    return Basis(L, None, states)


def neel_config(L: int) -> int:
    """Integer configuration of |up down up down ...> (up on odd sites)."""
    return sum(1 << j for j in range(0, L, 2))


def neel_vector(basis: Basis) -> np.ndarray:
    psi = np.zeros(basis.dim, dtype=np.complex128)
    psi[basis.index([neel_config(basis.L)])[0]] = 1.0
    return psi


@dataclass(frozen=True)
class ManyBodyHamiltonian:
    basis: Basis
    matrix: object  # ndarray or scipy.sparse.csr_matrix, real symmetric

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def is_dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def toarray(self) -> np.ndarray:
        return self.matrix if self.is_dense else self.matrix.toarray()

    def tosparse(self):
        return sp.csr_matrix(self.matrix) if self.is_dense else self.matrix


def _xxz_matrix(cfg: ChainConfig, h: np.ndarray, basis: Basis, dense: bool | None):
    L = basis.L
    states = basis.states
    s = basis.spins()
    diag = s @ h + cfg.J * cfg.Delta * np.sum(s[:, :-1] * s[:, 1:], axis=1)

    rows, cols = [np.arange(basis.dim)], [np.arange(basis.dim)]
    vals = [diag]
    for j in range(L - 1):
        mask = (1 << j) | (1 << (j + 1))
        pair = (states >> j) & 3
        flip = (pair == 1) | (pair == 2)
        src = np.nonzero(flip)[0]
        dst = basis.index(states[src] ^ mask)
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.shape, cfg.J / 2))
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )
    if dense is None:
        dense = basis.dim <= DENSE_CAP
    return mat.toarray() if dense else mat


def build_h0_spin(cfg: ChainConfig, disorder: DisorderSample, basis: Basis | None = None,
                  dense: bool | None = None) -> ManyBodyHamiltonian:
    """XXZ Hamiltonian with random fields in the zero-magnetization sector."""
    if disorder.L != cfg.L:
        raise InvalidArgument(f"disorder has {disorder.L} sites, chain has {cfg.L}")
    if basis is None:
        basis = build_sector_basis(cfg.L)
    elif basis.L != cfg.L:
        raise InvalidArgument("basis size does not match the chain")
    return ManyBodyHamiltonian(basis, _xxz_matrix(cfg, disorder.h, basis, dense))


def build_h0_full(cfg: ChainConfig, disorder: DisorderSample,
                  dense: bool | None = None) -> ManyBodyHamiltonian:
    """Same Hamiltonian on the full 2^L space (needed once the noise breaks S^z_tot)."""
    if disorder.L != cfg.L:
        raise InvalidArgument(f"disorder has {disorder.L} sites, chain has {cfg.L}")
    basis = build_full_basis(cfg.L)
    return ManyBodyHamiltonian(basis, _xxz_matrix(cfg, disorder.h, basis, dense))


def build_h0(cfg: ChainConfig, disorder: DisorderSample, dense: bool | None = None):
    """Sector Hamiltonian for conserving noise, full-basis one otherwise."""
    if cfg.conserving:
        return build_h0_spin(cfg, disorder, dense=dense)
    return build_h0_full(cfg, disorder, dense=dense)


def boundary_operators(basis: Basis) -> dict:
    """Dense matrices of the boundary noise operators in ``basis``.

    Keys: ``"sz1"`` always; ``"sx1"`` and ``"pair"`` (S1+S2+ + S1-S2-) only
    for the full basis, since both leave the S^z_tot sector.
    """
    d = basis.dim
    ops = {"sz1": np.diag(basis.spins()[:, 0]).astype(np.complex128)}
    if basis.is_sector:
        return ops
    states = basis.states
    sx = np.zeros((d, d), dtype=np.complex128)
    sx[states ^ 1, states] = 0.5
    pair = np.zeros((d, d), dtype=np.complex128)
    low2 = states & 3
    both = np.nonzero((low2 == 0) | (low2 == 3))[0]
    pair[states[both] ^ 3, both] = 1.0
    ops["sx1"] = sx
    ops["pair"] = pair
    return ops


def build_single_particle(cfg: ChainConfig, disorder: DisorderSample) -> np.ndarray:
    """Tridiagonal single-particle matrix Q: fields on the diagonal, J/2 off it."""
    if disorder.L != cfg.L:
        raise InvalidArgument(f"disorder has {disorder.L} sites, chain has {cfg.L}")
    off = np.full(cfg.L - 1, cfg.J / 2)
    return np.diag(disorder.h) + np.diag(off, 1) + np.diag(off, -1)


@dataclass(frozen=True)
class BdgBlocks:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray | None = None

    @property
    def pairing(self) -> np.ndarray:
        """Antisymmetric pairing matrix B - B^T that makes the BdG generator Hermitian."""
        return self.B - self.B.T


def build_bdg_blocks(cfg: ChainConfig, disorder: DisorderSample | None = None) -> BdgBlocks:
    L = cfg.L
    A = np.zeros((L, L))
    A[0, 0] = 1.0
    B = np.zeros((L, L))
    B[0, 1] = 1.0
    Q = None if disorder is None else build_single_particle(cfg, disorder)
    return BdgBlocks(A, B, Q)
