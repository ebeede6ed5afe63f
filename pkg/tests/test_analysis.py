import json
import math
from dataclasses import asdict

import numpy as np
import pytest

from thermfront.analysis import (TWO_LN2, TWO_LN4, AnalysisReport, check_avalanche,
                                 collapse_check, detect_threshold_time, estimate_w_star,
                                 fit_alpha, fit_log_slope, robustness_from_slope, verify_report)
from thermfront.errors import FitFailure, InvalidArgument


def test_threshold_examples():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    assert detect_threshold_time(t, np.zeros(4)).t_tilde is None
    res = detect_threshold_time(t, [0, 0.1, 0.2, 0.3], np.zeros(4), 0.17)
    assert res.t_tilde == 3.0 and res.index == 2
    assert res.crossing_rule == "mean-1sigma>=r_th,first"
    assert detect_threshold_time(t, np.full(4, 0.2), np.full(4, 0.05), 0.17).t_tilde is None


def test_threshold_skips_undefined_points():
    t = np.array([1.0, 2.0, 3.0])
    res = detect_threshold_time(t, [np.nan, 0.5, 0.5], [np.nan, 0.01, 0.01])
    assert res.t_tilde == 2.0
    # a NaN error never lets a point through
    assert detect_threshold_time(t, [0.9, 0.1, 0.1], [np.nan, 0, 0]).t_tilde is None


def test_threshold_input_checks():
    with pytest.raises(InvalidArgument):
        detect_threshold_time([2.0, 1.0], [0, 0])
    with pytest.raises(InvalidArgument):
        detect_threshold_time([1.0, 2.0], [0, 0, 0])


def test_log_slope_exact():
    t = np.logspace(1, 3, 20)
    fit = fit_log_slope(t, 2 * np.log(t), window=(10, 1000), resample=None)
    assert fit.A == pytest.approx(2.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0) and fit.n_points == 20
    resampled = fit_log_slope(t, 2 * np.log(t) + 0.5, window=(10, 1000))
    assert resampled.A == pytest.approx(2.0, abs=1e-12)
    assert resampled.intercept == pytest.approx(0.5, abs=1e-10)


def test_log_slope_noisy():
    rng = np.random.default_rng(3)
    t = np.logspace(1, 3, 20)
    hits = 0
    for _ in range(200):
        h = 2 * np.log(t) + rng.normal(0, 0.1, t.size)
        fit = fit_log_slope(t, h, np.full(t.size, 0.1), window=(10, 1000), resample=None)
        hits += abs(fit.A - 2) < 3 * fit.A_err
    assert hits >= 190


def test_log_slope_constant_and_window():
    t = np.logspace(0, 3, 40)
    assert fit_log_slope(t, np.full(40, 1.3)).A == pytest.approx(0.0, abs=1e-12)
    fit = fit_log_slope(t, np.log(t), window=(10, 100))
    assert fit.t_lo == pytest.approx(10, rel=1e-9) and fit.t_hi == pytest.approx(100, rel=0.03)


def test_log_slope_failures():
    t = np.logspace(0, 3, 40)
    h = np.log(t)
    h[t > 5] = np.nan
    with pytest.raises(FitFailure):
        fit_log_slope(t, h)
    with pytest.raises(InvalidArgument):
        fit_log_slope(t, np.log(t), window=(100, 10))


def test_alpha_exact():
    pts = [(L, W, math.exp(0.04 * L * W + 1)) for L in (8, 12, 16) for W in (4, 8)]
    fit = fit_alpha(pts)
    assert fit.alpha == pytest.approx(0.04, abs=1e-12)
    assert fit.beta == pytest.approx(1.0, abs=1e-10)
    assert fit.W_tilde * fit.alpha == pytest.approx(TWO_LN2, rel=1e-15)


def test_alpha_failures():
    with pytest.raises(FitFailure):
        fit_alpha([(8, 4, 10.0), (8, 6, None)])
    with pytest.raises(FitFailure):
        fit_alpha([(8, 4, 10.0), (4, 8, 12.0), (16, 2, 9.0)])


def test_w_tilde_from_reference_alpha():
    assert TWO_LN2 / 0.036 == pytest.approx(38.5, abs=0.05)
    assert robustness_from_slope(0.3, alpha=0.036).W_tilde == pytest.approx(38.5, abs=0.05)


def test_robustness_examples():
    r = robustness_from_slope(0.3)
    assert r.one_over_A == pytest.approx(3.333, abs=1e-3) and r.criterion_log and r.verdict == "robust"
    r = robustness_from_slope(1.0)
    assert not r.criterion_log and r.verdict == "inconclusive"
    r = robustness_from_slope(1 / TWO_LN4)
    assert abs(r.log_margin) < 1e-12 and r.verdict == "marginal"
    assert TWO_LN4 == pytest.approx(2.7726, abs=1e-4)
    with pytest.raises(InvalidArgument):
        robustness_from_slope(0.0)


def test_kappa_is_capped():
    assert robustness_from_slope(1e-6).kappa == math.exp(700)
    assert robustness_from_slope(0.25).kappa == pytest.approx(math.exp(2.0))


def test_avalanche_examples():
    assert check_avalanche(4.0, 1, 2, 10).verdict == "marginal"
    v = check_avalanche(2.0, 1, 2, 1000)
    assert v.verdict == "propagates" and not v.finite_size_halts
    v = check_avalanche(8.0, 1, 2, 1000)
    assert v.verdict == "halts" and v.finite_size_halts
    assert v.log_ts == pytest.approx(1000 * math.log(8))
    assert v.log_inverse_delta == pytest.approx((1 + 4 + 2000) * math.log(2))
    with pytest.raises(InvalidArgument):
        check_avalanche(0.0, 1, 1, 1)
    with pytest.raises(InvalidArgument):
        check_avalanche(2.0, -1, 1, 1)


def test_w_star_interpolation():
    assert estimate_w_star([2, 4, 6], [1.0, 2.0, 4.0]) == pytest.approx(4 + 2 * (TWO_LN4 - 2) / 2)
    assert estimate_w_star([6, 2, 4], [4.0, 1.0, 2.0]) == estimate_w_star([2, 4, 6], [1.0, 2.0, 4.0])
    assert estimate_w_star([2, 4], [3.0, 5.0]) == 2.0
    assert estimate_w_star([2, 4], [1.0, 2.0]) is None


def test_collapse_examples():
    t = np.logspace(1, 3, 30)
    err = np.full(30, 0.01)
    same = np.sin(np.log(t))
    assert collapse_check({20: (t, same / 20, err), 40: (t, same / 40, err)}) == 0
    exact = {L: (t, 0.5 * np.log(t) / L, err) for L in (20, 40)}
    assert collapse_check(exact) < 1e-12
    shifted = {20: (t, 0.5 * np.log(t) / 20, err), 40: (t, 0.5 * np.log(t) / 40 + 0.01, err)}
    z = collapse_check(shifted)
    assert z == pytest.approx(0.4 / math.hypot(0.2, 0.4), rel=1e-9)


def test_collapse_failures():
    t = np.logspace(1, 2, 10)
    with pytest.raises(InvalidArgument):
        collapse_check({20: (t, t, None)})
    with pytest.raises(InvalidArgument):
        collapse_check({20: (t, t, None), 40: (t * 1000, t, None)})


def test_report_round_trip_and_verify():
    rep = AnalysisReport()
    rob = asdict(robustness_from_slope(0.1, alpha=0.04))
    rob["label"] = "W=5"
    rep.robustness.append(rob)
    rep.alpha = {"alpha": 0.04, "W_tilde": TWO_LN2 / 0.04}
    rep.w_star = {"Delta=0": {"W": [2, 4], "one_over_A": [1.0, 4.0],
                              "W_star": estimate_w_star([2, 4], [1.0, 4.0])}}
    data = json.loads(rep.to_json())
    assert verify_report(data) == []
    data["robustness"][0]["verdict"] = "inconclusive"
    data["alpha"]["W_tilde"] = 17.0
    assert len(verify_report(data)) == 2
