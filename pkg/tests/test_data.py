"""Synthetic dataset generators: geometry, balance, splits, and the
area-uniform radial law."""

import numpy as np
import pytest
from scipy import stats

from curvetune.data import CircleTask, gen_annulus, gen_regression_1d


class TestAnnulus:
    def test_odd_n_rejected(self):
        with pytest.raises(ValueError):
            gen_annulus(101, 0)

    def test_radii_and_balance(self):
        data = gen_annulus(400, 1)
        r = np.linalg.norm(data.inputs, axis=1)
        inner = data.targets == 0
        assert np.all(r[inner] <= 0.5 + 1e-12)
        assert np.all((r[~inner] >= 1.5 - 1e-12) & (r[~inner] <= 2.0 + 1e-12))
        assert inner.sum() == 200

    def test_split_fractions_stratified(self):
        data = gen_annulus(200, 2)
        for cls in (0, 1):
            m = data.targets == cls
            assert (data.split[m] == "train").sum() == 70
            assert (data.split[m] == "val").sum() == 15
            assert (data.split[m] == "test").sum() == 15

    def test_deterministic_per_seed(self):
        a = gen_annulus(64, 7)
        b = gen_annulus(64, 7)
        assert np.array_equal(a.inputs, b.inputs)
        assert not np.array_equal(a.inputs, gen_annulus(64, 8).inputs)

    def test_area_uniform_radial_law(self):
        data = gen_annulus(20000, 3)
        r2 = np.sum(data.inputs[data.targets == 1] ** 2, axis=1)
        # uniform-in-area => squared radius uniform on [1.5^2, 2^2]
        u = (r2 - 1.5**2) / (2.0**2 - 1.5**2)
        assert stats.kstest(u, "uniform").pvalue > 0.01

    def test_gamma_traces_unit_circle(self):
        pts = CircleTask.gamma(np.linspace(0, 1, 17))
        assert np.linalg.norm(pts, axis=-1) == pytest.approx(np.ones(17), abs=1e-12)


class TestRegression:
    def test_target_function(self):
        data = gen_regression_1d(128, 0)
        assert data.inputs.min() >= -1.0 and data.inputs.max() <= 1.0
        assert data.targets == pytest.approx(np.sin(2 * np.pi * data.inputs.reshape(-1)), abs=1e-12)
        assert np.sin(2 * np.pi * 0.25) == pytest.approx(1.0)

    def test_subsets_partition(self):
        data = gen_regression_1d(100, 1)
        n = sum(len(data.subset(tag)[0]) for tag in ("train", "val", "test"))
        assert n == 100
