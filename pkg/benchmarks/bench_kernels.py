"""Time the compiled trajectory kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]

Each case runs one trajectory through the public engine with either kernel
set swapped into ``thermfront.kernels`` and reports microseconds per step.
"""

import argparse
import time

import numpy as np

from thermfront import _kernels_py, kernels
from thermfront.model import ChainConfig, build_h0
from thermfront.noise import NoiseTrace, SeedSpec, sample_disorder, sample_kicks
from thermfront.traj_ed import evolve_trajectory, make_propagator
from thermfront.traj_gaussian import evolve_bdg, evolve_gaussian

NAMES = ("ed_modal_z", "ed_site", "poly_site", "gaussian_modal", "bdg_modal")


def _trace(cfg, steps, seed=1):
    dis = sample_disorder(cfg.L, cfg.W, SeedSpec(seed, 0, "disorder"))
    eta = sample_kicks(steps, 0.05, SeedSpec(seed, 0, "kick_z"))
    eta2 = sample_kicks(steps, 0.05, SeedSpec(seed, 0, "kick_pair")) if cfg.gamma1 else None
    return dis, NoiseTrace(eta, 0.05, eta2)


def cases(steps):
    out = []
    for label, cfg, mode in [
        ("ED sector L=10 (modal)", ChainConfig(10, W=5.0, gamma=1.0), "dense"),
        ("ED sector L=12 (chebyshev)", ChainConfig(12, W=5.0, gamma=1.0), "chebyshev"),
        ("ED full L=8 pair (dense)", ChainConfig(8, W=5.0, gamma=1.0, gamma1=1.0), "dense"),
    ]:
        dis, kicks = _trace(cfg, steps)
        prop = make_propagator(build_h0(cfg, dis), 0.05, mode)
        out.append((label, lambda c=cfg, d=dis, k=kicks, p=prop:
                    evolve_trajectory(c, d, k, [0, steps], propagator=p)))
    for label, cfg, fn in [
        ("W-matrix L=50", ChainConfig(50, Delta=0.0, W=5.0, gamma=1.0), evolve_gaussian),
        ("BdG L=50", ChainConfig(50, Delta=0.0, W=5.0, gamma=1.0, gamma1=1.0), evolve_bdg),
    ]:
        dis, kicks = _trace(cfg, steps)
        out.append((label, lambda c=cfg, d=dis, k=kicks, f=fn: f(c, d, k, [0, steps])))
    return out


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.compiled_kernels is None:
        raise SystemExit("compiled kernels are not built; nothing to compare")
    compiled = {n: getattr(kernels, n) for n in NAMES}
    fallback = {n: getattr(_kernels_py, n) for n in NAMES}
    print(f"{'case':<30}{'compiled us/step':>18}{'numpy us/step':>16}{'speedup':>10}")
    for label, fn in cases(args.steps):
        times = []
        for impl in (compiled, fallback):
            for n, f in impl.items():
                setattr(kernels, n, f)
            times.append(best_time(fn, args.repeat) / args.steps * 1e6)
        for n, f in compiled.items():
            setattr(kernels, n, f)
        print(f"{label:<30}{times[0]:>18.2f}{times[1]:>16.2f}{times[1] / times[0]:>9.1f}x")


if __name__ == "__main__":
    main()
