import numpy as np
import pytest

from thermfront.errors import InvalidArgument
from thermfront.observables import (FrontSeries, ImbalanceSeries, MagnetizationSeries, delta_s,
                                    imbalance, imbalance_prefactor, read_front_csv,
                                    read_imbalance_csv, read_magnetization_csv,
                                    relative_imbalance, thermal_front_h, write_front_csv,
                                    write_imbalance_csv, write_magnetization_csv)

NEEL = np.array([0.5, -0.5] * 4)


def test_imbalance_examples():
    assert imbalance(NEEL) == pytest.approx(1.0, abs=1e-15)
    assert imbalance(np.zeros(8)) == 0
    assert imbalance(-NEEL) == pytest.approx(-1.0, abs=1e-15)
    assert imbalance_prefactor(8) == -0.25


def test_imbalance_broadcasts_and_checks_length():
    stack = np.stack([NEEL, -NEEL, np.zeros(8)])
    assert np.allclose(imbalance(stack), [1, -1, 0])
    with pytest.raises(InvalidArgument):
        imbalance(NEEL, L=6)


def test_relative_imbalance_examples():
    I0 = np.array([0.5, 0.8, 1.0])
    assert np.all(relative_imbalance(I0, I0) == 0)
    assert np.allclose(relative_imbalance(I0, np.zeros(3)), 1)
    assert relative_imbalance(np.array([0.5]), np.array([0.4]))[0] == pytest.approx(0.2)


def test_relative_imbalance_floor():
    out = relative_imbalance(np.array([5e-4, -2e-3]), np.array([0.0, 0.0]))
    assert np.isnan(out[0]) and out[1] == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        relative_imbalance(np.ones(2), np.ones(3))


def test_delta_s_examples():
    assert np.all(delta_s(NEEL, NEEL) == 0)
    assert np.allclose(delta_s([0.5, -0.5], [0.1, -0.2]), [0.4, 0.3])
    with pytest.raises(InvalidArgument):
        delta_s(np.zeros(2), np.zeros(3))


def test_front_examples():
    assert thermal_front_h(np.full(7, 0.3)) == pytest.approx(3.0)
    assert thermal_front_h(np.array([0.2, 0, 0, 0])) == 0
    assert thermal_front_h(np.array([0.0, 1.0, 0.0, 1.0]), L=4) == pytest.approx(2.0)
    assert np.isnan(thermal_front_h(np.zeros(6)))
    assert np.isnan(thermal_front_h(np.full(4, 1e-10)))


def test_front_on_series():
    dS = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 1, 1.0]])
    h = thermal_front_h(dS)
    assert np.isnan(h[0]) and h[1] == 0 and h[2] == 1.5
    f = FrontSeries(np.arange(3.0), dS, h, np.zeros(3))
    assert f.defined.tolist() == [False, True, True]


def test_csv_round_trips(tmp_path, rng):
    t = np.array([0.0, 0.05, 1.0])
    vals = rng.uniform(-0.5, 0.5, (3, 4))
    errs = rng.uniform(0, 0.01, (3, 4))
    write_magnetization_csv(tmp_path / "m.csv", MagnetizationSeries(t, vals, errs))
    back = read_magnetization_csv(tmp_path / "m.csv")
    assert np.array_equal(back.times, t) and np.array_equal(back.values, vals)
    assert np.array_equal(back.errors, errs)

    cols = [rng.normal(size=3) for _ in range(6)]
    cols[4][0] = np.nan
    imb = ImbalanceSeries(t, *cols)
    write_imbalance_csv(tmp_path / "i.csv", imb)
    got = read_imbalance_csv(tmp_path / "i.csv")
    for a, b in zip((imb.times, *cols), (got.times, got.I0, got.I0_err, got.Igamma,
                                         got.Igamma_err, got.Ir, got.Ir_err)):
        assert np.array_equal(a, b, equal_nan=True)

    h = np.array([np.nan, 0.3, 1.7])
    write_front_csv(tmp_path / "f.csv", FrontSeries(t, np.zeros((3, 4)), h, np.array([np.nan, 0.1, 0.2])))
    text = (tmp_path / "f.csv").read_text().splitlines()
    assert text[0] == "t,h,h_err,defined_flag" and text[1].endswith(",0")
    fr = read_front_csv(tmp_path / "f.csv")
    assert np.array_equal(fr.h, h, equal_nan=True)
