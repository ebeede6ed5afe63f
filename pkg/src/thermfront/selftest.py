"""Fast invariant suite run by ``thermfront selftest``.

Each check returns ``(ok, detail)``.  ``inject`` deliberately corrupts one
input so the corresponding check can be seen to fail:

* ``kick-variance``: kicks drawn with variance 2 tau while stepping by tau
* ``backend-mismatch``: the free-fermion run sees a slightly shifted field
"""

from __future__ import annotations

import math
import os
import tempfile
import time

import numpy as np

from . import kernels
from .analysis import detect_threshold_time, fit_alpha, fit_log_slope, robustness_from_slope
from .ensemble import EnsembleConfig, run_ensemble, save_ensemble
from .lindblad_oracle import integrate_lindblad
from .model import (ChainConfig, DisorderSample, build_full_basis, build_h0, build_h0_full,
                    neel_vector)
from .noise import NoiseTrace, SeedSpec, sample_disorder, sample_grid, sample_kicks
from .traj_ed import evolve_trajectory, make_propagator, sparse_commutes_with_sz, unitarity_defect
from .traj_gaussian import evolve_bdg, evolve_gaussian

SELFTEST_SEED = 20240601


def check_backends(inject=None):
    """Delta=0, L=8: ED, W-matrix and BdG (gamma1=0) series agree to 1e-8."""
    cfg = ChainConfig(8, Delta=0.0, W=5.0, gamma=1.0)
    steps = np.unique(np.concatenate([[0], np.linspace(1, 4000, 60).astype(np.int64)]))
    worst = 0.0
    for r in range(3):
        dis = sample_disorder(8, 5.0, SeedSpec(SELFTEST_SEED, r, "disorder"))
        eta = sample_kicks(int(steps[-1]), 0.05, SeedSpec(SELFTEST_SEED, r, "kick_z"))
        kicks = NoiseTrace(eta, 0.05)
        ed = evolve_trajectory(cfg, dis, kicks, steps).mags
        dis_ff = dis
        if inject == "backend-mismatch":
            h = dis.h.copy()
            h[3] = np.clip(h[3] + 1e-3, -5.0, 5.0)
            dis_ff = DisorderSample(h)
        ga = evolve_gaussian(cfg, dis_ff, kicks, steps).mags
        bd = evolve_bdg(cfg, dis_ff, kicks, steps).mags
        worst = max(worst, np.abs(ed - ga).max(), np.abs(ga - bd).max())
    return worst <= 1e-8, f"max |diff| = {worst:.2e} (tolerance 1e-8)"


def check_oracle(inject=None, n_r=300):
    """L=4 trajectory average vs Lindblad integration: >= 95% of points within 4 sigma."""
    cfg = ChainConfig(4, Delta=1.0, W=3.0, gamma=1.0)
    tau, t_final = 0.05, 5.0
    steps = sample_grid(t_final, tau, 20)
    scale = 2.0 if inject == "kick-variance" else 1.0
    dis, mags = [], []
    for r in range(n_r):
        d = sample_disorder(4, 3.0, SeedSpec(SELFTEST_SEED, r, "disorder"))
        eta = sample_kicks(int(steps[-1]), tau * scale, SeedSpec(SELFTEST_SEED, r, "kick_z"))
        mags.append(evolve_trajectory(cfg, d, NoiseTrace(eta, tau), steps, tau).mags)
        dis.append(d)
    mags = np.array(mags)
    mean = mags.mean(axis=0)
    err = mags.std(axis=0, ddof=1) / math.sqrt(n_r)
    ref = integrate_lindblad(None, cfg, dis, t_final, steps * tau).mags.mean(axis=0)
    frac = float((np.abs(mean - ref) <= 4 * err).mean())
    return frac >= 0.95, f"{100 * frac:.1f}% of (j, t) within 4 sigma (need 95%)"


def check_conservation():
    cfg = ChainConfig(8, Delta=1.0, W=4.0, gamma=1.0)
    dis = sample_disorder(8, 4.0, SeedSpec(SELFTEST_SEED, 0, "disorder"))
    H = build_h0(cfg, dis)
    prop = make_propagator(H, 0.05)
    unit = unitarity_defect(prop)
    comm = sparse_commutes_with_sz(build_h0_full(cfg, dis))
    steps = sample_grid(50.0, 0.05, 20)
    eta = sample_kicks(int(steps[-1]), 0.05, SeedSpec(SELFTEST_SEED, 0, "kick_z"))
    rec = evolve_trajectory(cfg, dis, NoiseTrace(eta, 0.05), steps, propagator=prop)
    sector = float(np.abs(rec.mags.sum(axis=1)).max())
    # full-basis Hamiltonian keeps the Neel state inside its sector
    Hf = build_h0_full(cfg, dis).toarray()
    psi = neel_vector(build_full_basis(8))
    out = Hf @ psi
    nup = np.array([bin(s).count("1") for s in range(256)])
    leak = float(np.abs(out[nup != 4]).max())
    cfg0 = ChainConfig(8, Delta=0.0, W=4.0, gamma=1.0, gamma1=1.0)
    eta2 = sample_kicks(int(steps[-1]), 0.05, SeedSpec(SELFTEST_SEED, 0, "kick_pair"))
    bdg = evolve_bdg(cfg0, dis, NoiseTrace(eta, 0.05, eta2), steps)
    ga = evolve_gaussian(ChainConfig(8, Delta=0.0, W=4.0), dis, NoiseTrace(eta, 0.05), steps)
    small = ChainConfig(4, Delta=1.0, W=3.0, gamma=1.0)
    orc = integrate_lindblad(None, small, sample_disorder(4, 3.0, SeedSpec(SELFTEST_SEED, 0, "disorder")),
                             20.0, np.linspace(0, 20, 21))
    items = {
        "propagator unitarity": (unit, 1e-12),
        "[H0, Sz_tot]": (comm, 1e-14),
        "sector leakage": (leak, 0.0),
        "sum of Sz (sector run)": (sector, 1e-12),
        "ED norm drift": (rec.drift, 1e-8),
        "W-matrix orthonormality": (ga.drift, 1e-10),
        "BdG constraint": (bdg.drift, 1e-10),
        "oracle trace": (orc.trace_defect, 1e-9),
        "oracle hermiticity": (orc.hermiticity_defect, 1e-10),
    }
    bad = [f"{k}={v:.2e}>{tol:g}" for k, (v, tol) in items.items() if v > tol]
    if orc.min_eigenvalue < -1e-10:
        bad.append(f"oracle min eigenvalue {orc.min_eigenvalue:.2e}")
    detail = ", ".join(f"{k} {v:.1e}" for k, (v, _) in items.items())
    return not bad, "; ".join(bad) if bad else detail


def check_fits():
    t = np.logspace(0, 3, 20)
    s = fit_log_slope(t, 2 * np.log(t), window=(1.0, 1e3), resample=None)
    pts = [(L, W, math.exp(0.04 * L * W + 1)) for L in (8, 12, 16) for W in (4, 8)]
    a = fit_alpha(pts)
    thr = detect_threshold_time([1, 2, 3, 4], [0, 0.1, 0.2, 0.3], [0, 0, 0, 0], 0.17)
    rob = robustness_from_slope(0.3)
    errs = [abs(s.A - 2), abs(a.alpha - 0.04), abs(a.beta - 1)]
    ok = max(errs) < 1e-10 and thr.t_tilde == 3 and rob.criterion_log
    return ok, f"A-2={errs[0]:.1e}, alpha-0.04={errs[1]:.1e}, beta-1={errs[2]:.1e}, t~={thr.t_tilde}"


def check_determinism(workers=2):
    cfg = ChainConfig(6, Delta=1.0, W=5.0, gamma=1.0)
    ens = EnsembleConfig(12, master_seed=SELFTEST_SEED, backend="ed", t_final=10.0)
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k, w in enumerate((1, 1, workers)):
            paths = save_ensemble(run_ensemble(cfg, ens, workers=w), os.path.join(tmp, str(k)))
            blobs.append([open(p, "rb").read() for p in sorted(paths.values())])
    same = blobs[0] == blobs[1] == blobs[2]
    return same, f"reruns and workers={workers} byte-identical: {same}"


CHECKS = [
    ("backend cross-check (Delta=0, L=8)", check_backends),
    ("oracle check (L=4)", check_oracle),
    ("conservation suite", check_conservation),
    ("fit exactness", check_fits),
    ("determinism", check_determinism),
]


def run_selftest(inject=None, workers=2, out=print) -> bool:
    out(f"kernels: {kernels.IMPLEMENTATION}")
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        if fn in (check_backends, check_oracle):
            ok, detail = fn(inject)
        elif fn is check_determinism:
            ok, detail = fn(workers)
        else:
            ok, detail = fn()
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}  [{time.perf_counter() - t0:.1f}s]")
    out("selftest passed" if all_ok else "selftest FAILED")
    return all_ok
