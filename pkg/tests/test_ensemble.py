import json

import numpy as np
import pytest

from thermfront.errors import InvalidArgument, NumericalFailure, UnsupportedOperation
from thermfront.ensemble import (EnsembleConfig, RealizationResult, config_hash,
                                 default_realizations, jackknife, load_ensemble, reduce_results,
                                 run_ensemble, run_realization, save_ensemble)
from thermfront.model import ChainConfig
from thermfront.observables import imbalance


def test_config_validation():
    with pytest.raises(InvalidArgument):
        EnsembleConfig(1)
    with pytest.raises(InvalidArgument):
        EnsembleConfig(4, backend="qmc")
    with pytest.raises(InvalidArgument):
        EnsembleConfig(4, tau=0.5, t_final=0.1)
    with pytest.raises(InvalidArgument):
        EnsembleConfig(4, ed_mode="lanczos")


def test_default_realization_counts():
    assert default_realizations("gaussian", 50) == 1200
    assert default_realizations("ed", 8) == 500
    assert default_realizations("ed", 12) == 300
    assert default_realizations("ed", 16) == 100


def test_two_realizations_average():
    cfg = ChainConfig(6, W=4.0, gamma=1.0)
    ens = EnsembleConfig(2, master_seed=3, t_final=5.0, points_per_decade=10)
    series = run_ensemble(cfg, ens)
    a, b = run_realization(cfg, ens, 0), run_realization(cfg, ens, 1)
    assert np.array_equal(series.magnetization.values, (a.magsg + b.magsg) / 2)
    assert np.array_equal(series.magnetization0.values, (a.mags0 + b.mags0) / 2)
    # the noiseless and noisy run share the disorder
    assert a.disorder_sha256 != b.disorder_sha256
    assert np.allclose(series.imbalance.I0[0], 1) and np.isclose(series.imbalance.Ir[0], 0)
    assert np.isnan(series.front.h[0])


def _synthetic(n, rng):
    # realization results with i.i.d. magnetizations on a 3-point grid
    ens = EnsembleConfig(n, t_final=0.1, tau=0.05, points_per_decade=1)
    steps = ens.grid().size
    out = [RealizationResult(i, rng.normal(0.4, 0.05, (steps, 2)) * [1, -1],
                             rng.normal(0.2, 0.05, (steps, 2)) * [1, -1], "x") for i in range(n)]
    return ens, out


def test_stderr_scales_with_sqrt_n(rng):
    cfg = ChainConfig(2, W=0.0)
    ratios = []
    for _ in range(20):
        e1, r1 = _synthetic(400, rng)
        e2, r2 = _synthetic(800, rng)
        s1 = reduce_results(cfg, e1, r1).magnetization.errors
        s2 = reduce_results(cfg, e2, r2).magnetization.errors
        ratios.append((s2 / s1).mean())
    assert abs(np.mean(ratios) - 2**-0.5) < 0.02


def test_jackknife_identities(rng):
    x = rng.normal(size=(200, 5))
    err = jackknife((x,), lambda m: m)
    assert np.allclose(err, x.std(axis=0, ddof=1) / np.sqrt(200), rtol=1e-12)
    assert np.all(jackknife((x,), lambda m: np.zeros(5)) == 0)
    with pytest.raises(UnsupportedOperation):
        jackknife(None, lambda m: m)
    with pytest.raises(InvalidArgument):
        jackknife((x, x[:10]), lambda a, b: a)


def test_jackknife_ratio_matches_first_order_propagation():
    rng = np.random.default_rng(8)
    n, ma, mb, sa, sb = 1000, 2.0, 5.0, 0.3, 0.4
    ratios = []
    for _ in range(30):
        a, b = rng.normal(ma, sa, n), rng.normal(mb, sb, n)
        ratios.append(float(jackknife((a, b), lambda x, y: x / y)))
    analytic = (ma / mb) * np.sqrt((sa / ma) ** 2 + (sb / mb) ** 2) / np.sqrt(n)
    assert abs(np.mean(ratios) / analytic - 1) < 0.1


def test_ir_error_is_jackknife_of_ratio():
    cfg = ChainConfig(6, W=4.0, gamma=1.0)
    s = run_ensemble(cfg, EnsembleConfig(12, master_seed=5, t_final=10.0, points_per_decade=10))
    m0, mg = s.store
    k = -1
    I0, Ig = imbalance(m0[:, k]), imbalance(mg[:, k])
    loo = [(np.delete(I0, i).mean() - np.delete(Ig, i).mean()) / np.delete(I0, i).mean()
           for i in range(12)]
    expected = np.sqrt(11 / 12 * ((np.array(loo) - np.mean(loo)) ** 2).sum())
    assert s.imbalance.Ir_err[k] == pytest.approx(expected, rel=1e-10)


def test_store_can_be_dropped():
    cfg = ChainConfig(4, W=2.0, gamma=1.0)
    s = run_ensemble(cfg, EnsembleConfig(3, t_final=1.0, points_per_decade=5, keep_store=False))
    with pytest.raises(UnsupportedOperation):
        s.jackknife(lambda a, b: a)


def test_worker_count_does_not_change_results():
    cfg = ChainConfig(6, W=4.0, gamma=1.0)
    ens = EnsembleConfig(8, master_seed=11, t_final=10.0, points_per_decade=10)
    a, b = run_ensemble(cfg, ens, workers=1), run_ensemble(cfg, ens, workers=2)
    for x, y in [(a.magnetization.values, b.magnetization.values),
                 (a.imbalance.Ir_err, b.imbalance.Ir_err), (a.front.h, b.front.h)]:
        assert x.tobytes() == y.tobytes()
    assert a.metadata == b.metadata


def test_saved_files_are_byte_identical(tmp_path):
    cfg = ChainConfig(4, W=3.0, gamma=1.0)
    ens = EnsembleConfig(4, master_seed=2, t_final=5.0, points_per_decade=10)
    p1 = save_ensemble(run_ensemble(cfg, ens), tmp_path / "a")
    p2 = save_ensemble(run_ensemble(cfg, ens), tmp_path / "b")
    for key in p1:
        assert open(p1[key], "rb").read() == open(p2[key], "rb").read()
    back = load_ensemble(p1["metadata"])
    assert back.chain == cfg
    assert json.load(open(p1["metadata"]))["imbalance_prefactor"] == -0.5
    assert np.array_equal(back.front.h, run_ensemble(cfg, ens).front.h, equal_nan=True)


def test_config_hash_tracks_inputs():
    cfg = ChainConfig(4, W=3.0)
    ens = EnsembleConfig(4)
    assert config_hash(cfg, ens) == config_hash(cfg, EnsembleConfig(4, keep_store=False))
    assert config_hash(cfg, ens) != config_hash(cfg, EnsembleConfig(5))
    assert config_hash(cfg, ens) != config_hash(ChainConfig(4, W=3.5), ens)


def test_failed_realizations_are_excluded_or_fatal(rng):
    cfg = ChainConfig(2, W=0.0)
    ens, res = _synthetic(200, rng)
    res[7] = RealizationResult(7, None, None, "x", "blew up")
    s = reduce_results(cfg, ens, res)
    assert s.n_used == 199 and s.excluded == [(7, "blew up")]
    assert s.metadata["excluded"] == [{"index": 7, "reason": "blew up"}]
    res[9] = RealizationResult(9, None, None, "x", "again")
    res[11] = RealizationResult(11, None, None, "x", "and again")
    with pytest.raises(NumericalFailure):
        reduce_results(cfg, ens, res)


def test_backend_checks():
    with pytest.raises(InvalidArgument):
        run_ensemble(ChainConfig(4, Delta=1.0, W=1.0), EnsembleConfig(2, backend="gaussian"))
    with pytest.raises(InvalidArgument):
        run_ensemble(ChainConfig(4, Delta=0.0, W=1.0, gamma1=1.0), EnsembleConfig(2, backend="gaussian"))


def test_oracle_backend_runs_on_the_same_grid():
    cfg = ChainConfig(4, W=2.0, gamma=1.0)
    ens = EnsembleConfig(2, backend="oracle", t_final=2.0, points_per_decade=10)
    s = run_ensemble(cfg, ens)
    assert s.magnetization.values.shape == (ens.grid().size, 4)


def test_front_slope_has_jackknife_errors():
    cfg = ChainConfig(20, Delta=0.0, W=3.0, gamma=1.0)
    s = run_ensemble(cfg, EnsembleConfig(30, backend="gaussian", master_seed=4, t_final=100.0,
                                         points_per_decade=20))
    fit = s.front_slope((5.0, 100.0))
    assert fit.A > 0 and fit.A_err > 0 and np.isfinite(fit.intercept_err)
