"""Paired noiseless/noisy disorder ensembles with deterministic reduction."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial

import numpy as np

from . import __version__
from .analysis import fit_log_slope
from .errors import InvalidArgument, NumericalFailure, UnsupportedOperation
from .model import ChainConfig
from .noise import realization_streams, sample_grid
from .observables import (FrontSeries, ImbalanceSeries, MagnetizationSeries, delta_s,
                          imbalance, imbalance_prefactor, relative_imbalance, thermal_front_h,
                          read_front_csv, read_imbalance_csv, read_magnetization_csv,
                          write_front_csv, write_imbalance_csv, write_magnetization_csv)

BACKENDS = ("ed", "gaussian", "bdg", "oracle")
MAX_FAILURE_FRACTION = 0.01


def default_realizations(backend: str, L: int) -> int:
    """1200 for the free-fermion engines; 500 at L=8 down to 100 at L=16 otherwise."""
    if backend in ("gaussian", "bdg"):
        return 1200
    return int(np.clip(500 - 50 * (L - 8), 100, 500))


ED_MODES = ("auto", "dense", "chebyshev", "krylov")


@dataclass(frozen=True)
class EnsembleConfig:
    N_r: int
    master_seed: int = 0
    backend: str = "ed"
    tau: float = 0.05
    t_final: float = 100.0
    points_per_decade: int = 60
    refine: int = 0  # run at tau / 2**refine on the refined noise path
    ed_mode: str = "auto"
    keep_store: bool = True
    pairing: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.N_r < 2:
            raise InvalidArgument("N_r must be at least 2")
        if self.backend not in BACKENDS:
            raise InvalidArgument(f"unknown backend {self.backend!r}")
        if not self.tau > 0 or not self.t_final > self.tau:
            raise InvalidArgument("need 0 < tau < t_final")
        if self.refine < 0:
            raise InvalidArgument("refine must be >= 0")
        if self.ed_mode not in ED_MODES:
            raise InvalidArgument(f"ed_mode must be one of {ED_MODES}")
        if not 0 <= self.master_seed < 2**64:
            raise InvalidArgument("master_seed must be an unsigned 64-bit integer")

    def grid(self) -> np.ndarray:
        """Record steps at the coarse step ``tau``."""
        return sample_grid(self.t_final, self.tau, self.points_per_decade)


def config_hash(cfg: ChainConfig, ens: EnsembleConfig) -> str:
    payload = {"chain": asdict(cfg), "ensemble": asdict(ens)}
    payload["ensemble"].pop("keep_store")
    blob = json.dumps(payload, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class RealizationResult:
    index: int
    mags0: np.ndarray | None
    magsg: np.ndarray | None
    disorder_sha256: str
    error: str | None = None


def _evolve(backend, cfg, disorder, kicks, steps, tau, ed_mode):
    if backend == "ed":
        from .traj_ed import evolve_trajectory

        return evolve_trajectory(cfg, disorder, kicks, steps, tau, mode=ed_mode).mags
    if backend == "gaussian":
        from .traj_gaussian import evolve_gaussian

        return evolve_gaussian(cfg, disorder, kicks, steps, tau).mags
    if backend == "bdg":
        from .traj_gaussian import evolve_bdg

        return evolve_bdg(cfg, disorder, kicks, steps, tau).mags
    from .lindblad_oracle import integrate_lindblad

    times = steps * tau
    return integrate_lindblad(None, cfg, disorder, float(times[-1]), times).mags


def run_realization(cfg: ChainConfig, ens: EnsembleConfig, index: int) -> RealizationResult:
    """Noiseless and noisy runs of realization ``index`` on the same disorder."""
    coarse = ens.grid()
    fine = coarse * 2**ens.refine
    tau = ens.tau / 2**ens.refine
    disorder, kicks = realization_streams(cfg, int(coarse[-1]), ens.tau, ens.master_seed,
                                          index, refine=ens.refine)
    if ens.backend == "oracle":
        kicks = None
    digest = hashlib.sha256(disorder.h.tobytes()).hexdigest()
    cfg0 = cfg.with_gamma(0.0, 0.0)
    try:
        m0 = _evolve(ens.backend, cfg0, disorder, None, fine, tau, ens.ed_mode)
        if hashlib.sha256(disorder.h.tobytes()).hexdigest() != digest:
            raise NumericalFailure("disorder sample changed between paired runs")
        mg = _evolve(ens.backend, cfg, disorder, kicks, fine, tau, ens.ed_mode)
    except NumericalFailure as exc:
        return RealizationResult(index, None, None, digest, str(exc))
    return RealizationResult(index, m0, mg, digest)


def jackknife(store, statistic):
    """Leave-one-out error of ``statistic(*means)``.

    ``store`` is a sequence of arrays sharing a leading realization axis;
    ``statistic`` maps their means to an array.  NaN entries of the statistic
    stay NaN in the error.
    """
    if store is None:
        raise UnsupportedOperation("jackknife needs the per-realization store")
    arrays = [np.asarray(a, dtype=np.float64) for a in store]
    n = arrays[0].shape[0]
    if n < 2 or any(a.shape[0] != n for a in arrays):
        raise InvalidArgument("store needs >= 2 realizations on a shared leading axis")
    totals = [a.sum(axis=0) for a in arrays]
    loo = np.stack([np.asarray(statistic(*[(s - a[i]) / (n - 1) for s, a in zip(totals, arrays)]),
                               dtype=np.float64) for i in range(n)])
    return np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))


def _stderr(a):
    return a.std(axis=0, ddof=1) / np.sqrt(a.shape[0])


def _ir_statistic(m0, mg):
    return relative_imbalance(imbalance(m0), imbalance(mg))


def _h_statistic(m0, mg):
    return thermal_front_h(delta_s(m0, mg))


@dataclass
class EnsembleSeries:
    chain: ChainConfig
    ensemble: EnsembleConfig
    steps: np.ndarray  # coarse record steps
    magnetization0: MagnetizationSeries
    magnetization: MagnetizationSeries
    imbalance: ImbalanceSeries
    front: FrontSeries
    n_used: int
    excluded: list
    metadata: dict
    store: tuple | None = None

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.ensemble.tau

    def jackknife(self, statistic):
        return jackknife(self.store, statistic)

    def front_slope(self, window=None, resample=20):
        """Log-slope fit of h(t) with jackknife errors on A and the intercept.

        The weighted fit treats time points as independent; they share the
        same trajectories, so its formal errors understate the spread.
        """
        f = self.front
        fit = fit_log_slope(f.times, f.h, f.h_err, window, resample)

        def stat(m0, mg):
            g = fit_log_slope(f.times, thermal_front_h(delta_s(m0, mg)), f.h_err, window, resample)
            return np.array([g.A, g.intercept])

        err = jackknife(self.store, stat)
        return replace(fit, A_err=float(err[0]), intercept_err=float(err[1]))


def reduce_results(cfg: ChainConfig, ens: EnsembleConfig, results) -> EnsembleSeries:
    """Merge realization results in index order."""
    results = sorted(results, key=lambda r: r.index)
    good = [r for r in results if r.error is None]
    bad = [(r.index, r.error) for r in results if r.error is not None]
    if len(bad) > MAX_FAILURE_FRACTION * ens.N_r:
        raise NumericalFailure(f"{len(bad)} of {ens.N_r} realizations failed; first: {bad[0][1]}")
    if len(good) < 2:
        raise NumericalFailure("fewer than two usable realizations")
    m0 = np.stack([r.mags0 for r in good])
    mg = np.stack([r.magsg for r in good])
    steps = ens.grid()
    times = steps * ens.tau
    mean0, meang = m0.mean(axis=0), mg.mean(axis=0)
    I0s, Igs = imbalance(m0), imbalance(mg)
    I0, Ig = I0s.mean(axis=0), Igs.mean(axis=0)
    Ir = relative_imbalance(I0, Ig)
    Ir_err = jackknife((m0, mg), _ir_statistic)
    dS = delta_s(mean0, meang)
    h = thermal_front_h(dS)
    h_err = jackknife((m0, mg), _h_statistic)
    digest = hashlib.sha256()
    for r in results:
        digest.update(r.disorder_sha256.encode())
    metadata = {
        "config_hash": config_hash(cfg, ens),
        "master_seed": ens.master_seed,
        "code_version": __version__,
        "chain": asdict(cfg),
        "ensemble": {k: v for k, v in asdict(ens).items() if k != "keep_store"},
        "imbalance_prefactor": imbalance_prefactor(cfg.L),
        "n_used": len(good),
        "excluded": [{"index": i, "reason": msg} for i, msg in bad],
        "disorder_sha256": digest.hexdigest(),
        "stderr": "sample std (ddof=1) / sqrt(n_used)",
        "derived_errors": "jackknife over realizations (Ir, h)",
    }
    return EnsembleSeries(
        chain=cfg, ensemble=ens, steps=steps,
        magnetization0=MagnetizationSeries(times, mean0, _stderr(m0)),
        magnetization=MagnetizationSeries(times, meang, _stderr(mg)),
        imbalance=ImbalanceSeries(times, I0, _stderr(I0s), Ig, _stderr(Igs), Ir, Ir_err),
        front=FrontSeries(times, dS, h, h_err),
        n_used=len(good), excluded=bad, metadata=metadata,
        store=(m0, mg) if ens.keep_store else None,
    )


def _check_backend(cfg: ChainConfig, ens: EnsembleConfig):
    if ens.backend in ("gaussian", "bdg") and cfg.Delta != 0:
        raise InvalidArgument(f"backend {ens.backend} requires Delta = 0")
    if ens.backend == "gaussian" and cfg.gamma1 > 0:
        raise InvalidArgument("nonconserving noise needs the bdg backend")
    if ens.backend == "bdg" and cfg.gamma1 > 0 and cfg.nonconserving != "pair":
        raise InvalidArgument("the bdg backend only supports the pair channel")
    if ens.backend == "oracle":
        from .lindblad_oracle import oracle_basis_check

        oracle_basis_check(cfg)


def run_ensemble(cfg: ChainConfig, ens: EnsembleConfig, workers: int = 1) -> EnsembleSeries:
    """Run ``ens.N_r`` paired realizations; the result does not depend on ``workers``."""
    _check_backend(cfg, ens)
    job = partial(run_realization, cfg, ens)
    if workers <= 1 or ens.N_r < 2 * workers:
        results = [job(r) for r in range(ens.N_r)]
    else:
        chunk = max(1, ens.N_r // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(ens.N_r), chunksize=chunk))
    return reduce_results(cfg, ens, results)


def file_stem(series_or_hash, prefix: str = "ens") -> str:
    h = series_or_hash if isinstance(series_or_hash, str) else series_or_hash.metadata["config_hash"]
    return f"{prefix}_{h[:16]}"


def save_ensemble(series: EnsembleSeries, outdir, prefix: str = "ens") -> dict:
    """Write metadata JSON plus magnetization, imbalance and front CSVs."""
    os.makedirs(outdir, exist_ok=True)
    stem = file_stem(series, prefix)
    paths = {
        "magnetization": os.path.join(outdir, stem + "_mags.csv"),
        "imbalance": os.path.join(outdir, stem + "_imbalance.csv"),
        "front": os.path.join(outdir, stem + "_front.csv"),
        "metadata": os.path.join(outdir, stem + ".json"),
    }
    write_magnetization_csv(paths["magnetization"], series.magnetization)
    write_imbalance_csv(paths["imbalance"], series.imbalance)
    write_front_csv(paths["front"], series.front)
    meta = dict(series.metadata)
    meta["files"] = {k: os.path.basename(v) for k, v in paths.items() if k != "metadata"}
    meta["csv_version"] = 1
    with open(paths["metadata"], "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


@dataclass(frozen=True)
class StoredEnsemble:
    """Ensemble read back from disk (no per-realization store)."""

    metadata: dict
    magnetization: MagnetizationSeries
    imbalance: ImbalanceSeries
    front: FrontSeries

    @property
    def chain(self) -> ChainConfig:
        return ChainConfig(**self.metadata["chain"])


def load_ensemble(json_path) -> StoredEnsemble:
    with open(json_path) as fh:
        meta = json.load(fh)
    base = os.path.dirname(json_path)
    files = meta["files"]
    return StoredEnsemble(
        meta,
        read_magnetization_csv(os.path.join(base, files["magnetization"])),
        read_imbalance_csv(os.path.join(base, files["imbalance"])),
        read_front_csv(os.path.join(base, files["front"])),
    )
