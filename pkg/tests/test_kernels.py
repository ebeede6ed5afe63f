"""The compiled kernels and the numpy fallback must produce the same series."""

import numpy as np
import pytest

from thermfront import _kernels_py, kernels
from thermfront.model import ChainConfig
from thermfront.noise import NoiseTrace, SeedSpec, sample_disorder, sample_grid, sample_kicks
from thermfront.traj_ed import evolve_trajectory
from thermfront.traj_gaussian import evolve_bdg, evolve_gaussian

compiled = pytest.mark.skipif(kernels.compiled_kernels is None, reason="extension not built")
NAMES = ("ed_modal_z", "ed_site", "poly_site", "gaussian_modal", "bdg_modal")


def _inputs(cfg, steps_final, seed):
    dis = sample_disorder(cfg.L, cfg.W, SeedSpec(seed, 0, "disorder"))
    eta = sample_kicks(steps_final, 0.05, SeedSpec(seed, 0, "kick_z"))
    eta2 = None
    if cfg.gamma1:
        tag = "kick_pair" if cfg.nonconserving == "pair" else "kick_x"
        eta2 = sample_kicks(steps_final, 0.05, SeedSpec(seed, 0, tag))
    return dis, NoiseTrace(eta, 0.05, eta2)


def _both(monkeypatch, run):
    fast = run()
    with monkeypatch.context() as m:
        for name in NAMES:
            m.setattr(kernels, name, getattr(_kernels_py, name))
        slow = run()
    return fast, slow


CASES = [
    ("sector dense", ChainConfig(8, W=4.0, gamma=1.0), "dense", evolve_trajectory),
    ("sector chebyshev", ChainConfig(10, W=4.0, gamma=1.0), "chebyshev", evolve_trajectory),
    ("full pair", ChainConfig(6, W=3.0, gamma=1.0, gamma1=0.7), "dense", evolve_trajectory),
    ("full x", ChainConfig(6, W=3.0, gamma=1.0, gamma1=0.7, nonconserving="x"), "dense",
     evolve_trajectory),
    ("full pair chebyshev", ChainConfig(10, W=3.0, gamma=1.0, gamma1=0.7), "chebyshev",
     evolve_trajectory),
    ("w-matrix", ChainConfig(20, Delta=0.0, W=5.0, gamma=1.0), None, evolve_gaussian),
    ("bdg", ChainConfig(20, Delta=0.0, W=5.0, gamma=1.0, gamma1=1.0), None, evolve_bdg),
]


@compiled
@pytest.mark.parametrize("label,cfg,mode,engine", CASES, ids=[c[0] for c in CASES])
def test_compiled_matches_fallback(monkeypatch, label, cfg, mode, engine):
    steps = sample_grid(20.0, 0.05, 20)
    dis, kicks = _inputs(cfg, int(steps[-1]), 3)
    kw = {"mode": mode} if mode else {}

    def run():
        return engine(cfg, dis, kicks, steps, **kw)

    fast, slow = _both(monkeypatch, run)
    assert np.abs(fast.mags - slow.mags).max() < 1e-12
    assert abs(fast.drift - slow.drift) < 1e-10


@compiled
def test_reorthonormalization_cadence_matches(monkeypatch):
    # long enough to cross several re-orthonormalization points
    cfg = ChainConfig(12, Delta=0.0, W=5.0, gamma=1.0)
    steps = np.array([0, 999, 1000, 1001, 2500, 3000])
    dis, kicks = _inputs(cfg, 3000, 5)
    fast, slow = _both(monkeypatch, lambda: evolve_gaussian(cfg, dis, kicks, steps))
    assert np.abs(fast.mags - slow.mags).max() < 1e-12


def test_selection_and_fallback_flag():
    assert kernels.IMPLEMENTATION == kernels.active.IMPLEMENTATION
    mods = kernels.available()
    assert mods[-1] is _kernels_py
    assert _kernels_py.IMPLEMENTATION != getattr(kernels.compiled_kernels, "IMPLEMENTATION", None)


def test_pure_python_environment_variable():
    import subprocess
    import sys

    code = "import thermfront.kernels as k; print(k.IMPLEMENTATION)"
    env = {"THERMFRONT_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"}
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env,
                         check=True).stdout.strip()
    assert out == _kernels_py.IMPLEMENTATION
