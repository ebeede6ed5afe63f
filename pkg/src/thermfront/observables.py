"""Imbalance, relative imbalance, magnetization differences and the front h(t).

All functions act on the last axis (sites) and broadcast over leading axes,
so the same code serves single snapshots, time series and per-realization
stacks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

IR_FLOOR = 1e-3
H_FLOOR = 1e-8
CSV_VERSION = 1


def imbalance_prefactor(L: int) -> float:
    """C_N = -2/L, fixing the Neel state (up on site 1) to imbalance 1."""
    return -2.0 / L


def _stagger(L: int) -> np.ndarray:
    return (-1.0) ** np.arange(1, L + 1)


def imbalance(mags, L: int | None = None):
    mags = np.asarray(mags, dtype=np.float64)
    if L is None:
        L = mags.shape[-1]
    if mags.shape[-1] != L:
        raise InvalidArgument(f"expected {L} sites, got {mags.shape[-1]}")
    return imbalance_prefactor(L) * (mags @ _stagger(L))


def relative_imbalance(I0, Igamma, floor: float = IR_FLOOR):
    """(I0 - Igamma) / I0, NaN where |I0| < floor."""
    I0 = np.asarray(I0, dtype=np.float64)
    Ig = np.asarray(Igamma, dtype=np.float64)
    if I0.shape != Ig.shape:
        raise InvalidArgument("imbalance series must share the grid")
    out = np.full(I0.shape, np.nan)
    ok = np.abs(I0) >= floor
    out[ok] = (I0[ok] - Ig[ok]) / I0[ok]
    return out


def delta_s(mags0, magsgamma):
    a = np.asarray(mags0, dtype=np.float64)
    b = np.asarray(magsgamma, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument("magnetization series must share the grid")
    return np.abs(a - b)


def thermal_front_h(dS, L: int | None = None, floor: float = H_FLOOR):
    """Weighted mean distance from site 1; NaN where sum(dS) < floor."""
    dS = np.asarray(dS, dtype=np.float64)
    if L is None:
        L = dS.shape[-1]
    if dS.shape[-1] != L:
        raise InvalidArgument(f"expected {L} sites, got {dS.shape[-1]}")
    total = dS.sum(axis=-1)
    weighted = dS @ np.arange(L, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = weighted / total
    return np.where(total >= floor, h, np.nan)


@dataclass(frozen=True)
class MagnetizationSeries:
    times: np.ndarray
    values: np.ndarray  # (n_times, L)
    errors: np.ndarray


@dataclass(frozen=True)
class ImbalanceSeries:
    times: np.ndarray
    I0: np.ndarray
    I0_err: np.ndarray
    Igamma: np.ndarray
    Igamma_err: np.ndarray
    Ir: np.ndarray
    Ir_err: np.ndarray


@dataclass(frozen=True)
class FrontSeries:
    times: np.ndarray
    deltaS: np.ndarray  # (n_times, L)
    h: np.ndarray
    h_err: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.h)


def _fmt(x) -> str:
    # repr keeps full precision and is stable across runs
    return "nan" if not np.isfinite(x) else repr(float(x))


def write_magnetization_csv(path, series: MagnetizationSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "mean", "stderr"])
        for k, t in enumerate(series.times):
            for j in range(series.values.shape[1]):
                w.writerow([_fmt(t), j + 1, _fmt(series.values[k, j]),
                            _fmt(series.errors[k, j])])


def write_imbalance_csv(path, series: ImbalanceSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "I0", "I0_err", "Ig", "Ig_err", "Ir", "Ir_err"])
        for k, t in enumerate(series.times):
            w.writerow([_fmt(v) for v in (t, series.I0[k], series.I0_err[k], series.Igamma[k],
                                          series.Igamma_err[k], series.Ir[k], series.Ir_err[k])])


def write_front_csv(path, series: FrontSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "h", "h_err", "defined_flag"])
        for k, t in enumerate(series.times):
            ok = bool(np.isfinite(series.h[k]))
            w.writerow([_fmt(t), _fmt(series.h[k]), _fmt(series.h_err[k]), int(ok)])


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(rows[0]))


def read_imbalance_csv(path) -> ImbalanceSeries:
    _, a = _read(path)
    return ImbalanceSeries(*(a[:, i] for i in range(7)))


def read_front_csv(path) -> FrontSeries:
    _, a = _read(path)
    h = np.where(a[:, 3] > 0, a[:, 1], np.nan)
    return FrontSeries(a[:, 0], np.empty((a.shape[0], 0)), h, a[:, 2])


def read_magnetization_csv(path) -> MagnetizationSeries:
    _, a = _read(path)
    times = np.unique(a[:, 0])
    L = int(a[:, 1].max())
    return MagnetizationSeries(times, a[:, 2].reshape(times.size, L), a[:, 3].reshape(times.size, L))
