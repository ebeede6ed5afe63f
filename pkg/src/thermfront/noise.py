"""Disorder fields, Gaussian kick sequences and hierarchical seeding.

Every random stream is derived from ``(master_seed, realization, tag)``
through :class:`numpy.random.SeedSequence`, so realizations can be generated
in any order, on any worker, with no shared RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .model import ChainConfig, DisorderSample

STREAM_TAGS = {"disorder": 1, "kick_z": 2, "kick_x": 3, "kick_pair": 4}
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    realization_index: int
    stream_tag: str
    level: int = 0  # refinement level for halved-step kick paths

    def __post_init__(self):
        if self.stream_tag not in STREAM_TAGS:
            raise InvalidArgument(f"unknown stream tag {self.stream_tag!r}")
        if self.realization_index < 0 or self.level < 0:
            raise InvalidArgument("realization index and level must be >= 0")

    def entropy(self) -> list[int]:
        return [self.master_seed & _MASK64, self.realization_index,
                STREAM_TAGS[self.stream_tag], self.level]

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.entropy())))


@dataclass(frozen=True)
class NoiseTrace:
    """Kick amplitudes, one per Trotter step, each of variance ``tau``.

    ``eta2`` carries the second (nonconserving) channel when present.
    """

    eta: np.ndarray
    tau: float
    eta2: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return self.eta.shape[0]


def n_steps(t_final: float, tau: float) -> int:
    """ceil(t_final / tau), tolerant to floating-point representation of the ratio."""
    ratio = t_final / tau
    nearest = round(ratio)
    if abs(ratio - nearest) < 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.ceil(ratio))


def sample_disorder(L: int, W: float, seed: SeedSpec) -> DisorderSample:
    if W < 0:
        raise InvalidArgument("W must be non-negative")
    rng = seed.generator()
    return DisorderSample(rng.uniform(-W, W, size=L) if W > 0 else np.zeros(L))


def sample_kicks(steps: int, tau: float, seed: SeedSpec) -> np.ndarray:
    """Independent zero-mean Gaussians of variance ``tau``."""
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    return seed.generator().normal(0.0, math.sqrt(tau), size=steps)


def refine_kicks(eta: np.ndarray, tau: float, seed: SeedSpec) -> np.ndarray:
    """Split each increment of a step-``tau`` path into two of step ``tau/2``.

    The halves sum to the coarse increment (same underlying Brownian path) and
    are independent with variance ``tau/2`` each.
    """
    zeta = seed.generator().normal(0.0, math.sqrt(tau) / 2, size=eta.shape[0])
    fine = np.empty(2 * eta.shape[0])
    fine[0::2] = eta / 2 + zeta
    fine[1::2] = eta / 2 - zeta
    return fine


def realization_streams(cfg: ChainConfig, steps: int, tau: float, master_seed: int,
                        realization: int, refine: int = 0):
    """Disorder and kick trace for one realization.

    ``refine`` halves the step that many times while keeping the coarse path,
    so a run at ``tau / 2**refine`` sees the same noise as one at ``tau``.
    """
    disorder = sample_disorder(cfg.L, cfg.W, SeedSpec(master_seed, realization, "disorder"))
    if cfg.gamma == 0 and cfg.gamma1 == 0:
        return disorder, None

    def stream(tag):
        eta = sample_kicks(steps, tau, SeedSpec(master_seed, realization, tag))
        t = tau
        for level in range(1, refine + 1):
            eta = refine_kicks(eta, t, SeedSpec(master_seed, realization, tag, level))
            t /= 2
        return eta

    eta = stream("kick_z")
    eta2 = None
    if cfg.gamma1 > 0:
        eta2 = stream("kick_pair" if cfg.nonconserving == "pair" else "kick_x")
    return disorder, NoiseTrace(eta, tau / 2 ** refine, eta2)


def sample_grid(t_final: float, tau: float, points_per_decade: int = 60) -> np.ndarray:
    """Log-spaced step indices in [1, n_final] snapped to integers, plus step 0.

    At most ``points_per_decade`` (capped at 60) distinct points per decade;
    the final step is always included.
    """
    points_per_decade = min(int(points_per_decade), 60)
    if points_per_decade < 1:
        raise InvalidArgument("points_per_decade must be >= 1")
    n_final = n_steps(t_final, tau)
    if n_final < 1:
        raise InvalidArgument("t_final must exceed tau")
    decades = math.log10(n_final)
    count = max(2, int(math.ceil(decades * points_per_decade)) + 1)
    raw = np.unique(np.rint(np.logspace(0.0, decades, count)).astype(np.int64))
    raw[-1] = n_final
    return np.concatenate([[0], np.unique(raw)])
