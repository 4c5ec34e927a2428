import gzip
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from robust_sinkhorn.distributions import (
    DataFormatError,
    DataReadError,
    DiscreteDistribution,
    RowLengthError,
    SampleSet,
    gaussian_kernel_sample,
    importance_ratio,
    load_csv,
    load_idx,
    log_importance_ratios,
    make_rng,
    mixture_support,
    ratios_from_log_odds,
    rho_bar_offset,
    save_csv,
    write_idx,
)

DATA = Path(__file__).parent / "data"


class TestSampleSet:
    def test_vector_becomes_column(self):
        s = SampleSet([1.0, 2.0, 3.0])
        assert s.points.shape == (3, 1) and s.dim == 1 and len(s) == 3

    def test_read_only(self):
        s = SampleSet(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            s.points[0, 0] = 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            SampleSet(np.zeros((0, 3)))

    def test_discrete_distribution_moments(self):
        d = DiscreteDistribution([[0.0], [2.0]], [1.0, 3.0])
        assert d.total_mass == 4.0
        assert d.mean() == pytest.approx([1.5])
        assert d.std() == pytest.approx(np.sqrt(0.75))
        with pytest.raises(ValueError):
            DiscreteDistribution([[0.0]], [-1.0])


class TestKernelSampling:
    def test_degenerate_bandwidth(self):
        cloud = gaussian_kernel_sample([0.0, 0.0], 1e-12, 3, make_rng(1))
        assert np.max(np.abs(cloud.draws.points)) < 1e-5

    def test_law_of_large_numbers(self):
        cloud = gaussian_kernel_sample([0.0], 1.0, 100_000, make_rng(2))
        z = cloud.draws.points[:, 0]
        assert abs(z.mean()) < 0.02
        assert abs(z.var() - 1.0) < 0.02

    def test_covariance_scales_with_epsilon(self):
        cloud = gaussian_kernel_sample([1.0, -1.0], 0.25, 50_000, make_rng(3))
        cov = np.cov(cloud.draws.points.T)
        np.testing.assert_allclose(cov, 0.25 * np.eye(2), atol=0.01)
        np.testing.assert_allclose(cloud.draws.points.mean(axis=0), [1.0, -1.0], atol=0.01)

    def test_sub_keys_give_independent_streams(self):
        a = make_rng(7, 1).standard_normal(4)
        b = make_rng(7, 2).standard_normal(4)
        c = make_rng(7, 1).standard_normal(4)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, c)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            gaussian_kernel_sample([0.0], 0.0, 3, make_rng(0))
        with pytest.raises(ValueError):
            gaussian_kernel_sample([0.0], 1.0, 0, make_rng(0))


class TestImportanceRatio:
    def test_worked_example(self):
        # oracle: the two Gaussian densities evaluated directly
        q0 = multivariate_normal.pdf([0.0], mean=[0.0], cov=1.0)
        q1 = multivariate_normal.pdf([0.0], mean=[2.0], cov=1.0)
        r0, r1 = importance_ratio([0.0], [0.0], [2.0], 1.0)
        assert r0 == pytest.approx(2 * q0 / (q0 + q1), rel=1e-14)
        assert r0 == pytest.approx(1.76159, abs=1e-5)
        assert r1 == pytest.approx(2 * q1 / (q0 + q1), rel=1e-12)

    def test_equidistant(self):
        assert importance_ratio([1.0, 5.0], [0.0, 5.0], [2.0, 5.0], 0.3) == (1.0, 1.0)

    def test_swap(self):
        z = make_rng(0).standard_normal((20, 3))
        x0, x1 = np.ones(3), -np.ones(3)
        r0, r1 = importance_ratio(z, x0, x1, 0.7)
        s0, s1 = importance_ratio(z, x1, x0, 0.7)
        np.testing.assert_array_equal(r0, s1)
        np.testing.assert_array_equal(r1, s0)

    def test_far_apart_no_underflow_in_log(self):
        lr0, lr1 = log_importance_ratios(np.array([[0.0]]), [0.0], [100.0], 0.01)
        assert np.isfinite(lr1).all() and lr1[0] < -1e5
        assert lr0[0] == pytest.approx(np.log(2.0))

    @given(st.floats(-800, 800, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_ratios_sum_to_two(self, delta):
        r0, r1 = ratios_from_log_odds(delta)
        assert r0 + r1 == 2.0
        assert 0.0 <= r0 <= 2.0 and 0.0 <= r1 <= 2.0

    @given(st.floats(-30, 30, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_log_ratios_consistent(self, z):
        r0, r1 = importance_ratio([z], [0.0], [1.0], 0.5)
        lr0, lr1 = log_importance_ratios(np.array([[z]]), [0.0], [1.0], 0.5)
        if r1 > 1e-300:
            assert np.log(r1) == pytest.approx(lr1[0], rel=1e-9, abs=1e-12)
        assert np.log(r0) == pytest.approx(lr0[0], rel=1e-9, abs=1e-12)


class TestMixtureSupport:
    def test_duplicates_kept(self):
        c = gaussian_kernel_sample([0.0], 1.0, 4, make_rng(0))
        assert len(mixture_support(c, c)) == 8

    def test_single_draw(self):
        c0 = gaussian_kernel_sample([0.0], 1.0, 1, make_rng(0))
        c1 = gaussian_kernel_sample([1.0], 1.0, 1, make_rng(1))
        assert len(mixture_support(c0, c1)) == 2

    def test_mismatched_clouds(self):
        c0 = gaussian_kernel_sample([0.0], 1.0, 2, make_rng(0))
        c1 = gaussian_kernel_sample([0.0], 1.0, 3, make_rng(0))
        with pytest.raises(ValueError):
            mixture_support(c0, c1)

    def test_rho_bar_offset(self):
        assert rho_bar_offset(1.0 / (2 * np.pi), 3) == 0.0
        assert rho_bar_offset(1.0, 2) == pytest.approx(np.log(2 * np.pi))


class TestFiles:
    def test_csv_round_trip(self, tmp_path):
        pts = make_rng(0).standard_normal((5, 3))
        save_csv(tmp_path / "a.csv", pts)
        np.testing.assert_array_equal(load_csv(tmp_path / "a.csv").points, pts)

    def test_csv_example(self, tmp_path):
        (tmp_path / "b.csv").write_text("1.0,2.0\n3.0,4.0\n")
        np.testing.assert_array_equal(load_csv(tmp_path / "b.csv").points, [[1, 2], [3, 4]])

    @pytest.mark.parametrize("text, error", [
        ("1,2\n3\n", RowLengthError),
        ("1,x\n", DataFormatError),
        ("\n\n", DataFormatError),
    ])
    def test_csv_errors(self, tmp_path, text, error):
        (tmp_path / "c.csv").write_text(text)
        with pytest.raises(error):
            load_csv(tmp_path / "c.csv")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataReadError):
            load_csv(tmp_path / "nope.csv")

    @pytest.mark.parametrize("suffix", ["", ".gz"])
    def test_idx_round_trip(self, tmp_path, suffix):
        rng = make_rng(0)
        images = rng.integers(0, 256, size=(6, 4, 3)).astype(np.uint8)
        labels = [1, 2, 3, 1, 2, 7]
        write_idx(tmp_path / f"i{suffix}", tmp_path / f"l{suffix}", images, labels)
        data = load_idx(tmp_path / f"i{suffix}", tmp_path / f"l{suffix}", {1, 2})
        assert sorted(data) == [1, 2]
        np.testing.assert_allclose(data[1].points, images[[0, 3]].reshape(2, 12) / 255.0)
        assert len(data[2]) == 2

    def test_idx_bad_magic(self, tmp_path):
        write_idx(tmp_path / "i", tmp_path / "l", np.zeros((1, 2, 2)), [0])
        raw = bytearray((tmp_path / "i").read_bytes())
        raw[3] = 0x04
        (tmp_path / "i").write_bytes(bytes(raw))
        with pytest.raises(DataFormatError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_idx_truncated(self, tmp_path):
        write_idx(tmp_path / "i", tmp_path / "l", np.zeros((2, 2, 2)), [0, 1])
        (tmp_path / "i").write_bytes((tmp_path / "i").read_bytes()[:-1])
        with pytest.raises(DataFormatError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_bundled_mnist_subset(self):
        data = load_idx(DATA / "mnist5k-images-idx3-ubyte.gz", DATA / "mnist5k-labels-idx1-ubyte.gz", [1, 2])
        assert set(data) == {1, 2}
        assert data[1].dim == 784 and len(data[1]) == 500
        assert 0.0 <= data[2].points.min() and data[2].points.max() <= 1.0
        with gzip.open(DATA / "mnist5k-labels-idx1-ubyte.gz") as fh:
            assert fh.read(4) == b"\x00\x00\x08\x01"
