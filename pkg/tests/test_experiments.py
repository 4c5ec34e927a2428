from pathlib import Path

import numpy as np
import pytest

from robust_sinkhorn.detector import empirical_risk
from robust_sinkhorn.distributions import DiscreteDistribution, load_idx, make_rng
from robust_sinkhorn.experiments import (
    TOY_H0,
    TOY_H1,
    CvGrid,
    FitConfig,
    cross_validate,
    hdgm_means,
    hdgm_sample,
    lfd_tsv,
    mass_within,
    mnist_trial,
    run_hdgm,
    run_mnist,
    run_toy_lfd,
    tune_scan_config,
)
from robust_sinkhorn.cpd import ScanConfig

DATA = Path(__file__).parent / "data"
IMAGES = DATA / "mnist5k-images-idx3-ubyte.gz"
LABELS = DATA / "mnist5k-labels-idx1-ubyte.gz"
QUICK = FitConfig(epsilon=0.1, rho_bar=0.03, m=10, max_iters=100)


class TestHdgm:
    def test_means(self):
        e = hdgm_means("e")
        np.testing.assert_array_equal(e, [-np.ones(100), np.ones(100)])
        f = hdgm_means("f")
        np.testing.assert_array_equal(f[:, :50], e[:, :50])
        np.testing.assert_array_equal(f[:, 50:], -e[:, 50:])

    def test_sample_mean_symmetric(self):
        x = hdgm_sample("f", 100_000, make_rng(0))
        assert x.points.shape == (100_000, 100)
        assert np.max(np.abs(x.points.mean(axis=0))) < 0.05

    def test_component_spread(self):
        x = hdgm_sample("e", 50_000, make_rng(1)).points
        # per coordinate: mixture of N(-1, 1) and N(1, 1) has variance 2
        assert x[:, 0].var() == pytest.approx(2.0, abs=0.05)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            hdgm_sample("g", 3, make_rng(0))
        with pytest.raises(ValueError):
            hdgm_sample("e", 0, make_rng(0))
        with pytest.raises(ValueError):
            hdgm_means("e", 5)

    def test_run_small(self):
        res = run_hdgm(ns=[1, 3], trials=2, n_test=50, config=QUICK, seed=0, dim=10)
        for v in res["risk"].values():
            assert 0.0 <= v["mean_risk"] <= 1.0
        assert res["config"]["ns"] == [1, 3]
        again = run_hdgm(ns=[1, 3], trials=2, n_test=50, config=QUICK, seed=0, dim=10)
        assert again == res


class TestCrossValidation:
    def test_single_cell(self):
        rng = make_rng(0)
        res = cross_validate(rng.standard_normal((6, 1)), rng.standard_normal((6, 1)) + 1,
                             CvGrid((0.03,), (0.5,)), QUICK)
        assert (res.rho_bar, res.epsilon) == (0.03, 0.5)

    def test_argmin_and_tie_break(self):
        rng = make_rng(1)
        s0, s1 = rng.standard_normal((10, 1)) - 1, rng.standard_normal((10, 1)) + 1
        res = cross_validate(s0, s1, CvGrid((0.0, 0.1), (0.1, 1.0)), QUICK)
        risks = [row["risk"] for row in res.table]
        assert res.risk == min(risks)
        first = next(row for row in res.table if row["risk"] == res.risk)
        assert (first["rho_bar"], first["epsilon"]) == (res.rho_bar, res.epsilon)

    def test_easy_instance(self):
        rng = make_rng(2)
        s0, s1 = rng.standard_normal((20, 1)) - 3, rng.standard_normal((20, 1)) + 3
        res = cross_validate(s0, s1, CvGrid(), QUICK)
        assert res.risk <= 0.1

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            cross_validate([[0.0]], [[1.0]])
        with pytest.raises(ValueError):
            CvGrid((), (1.0,))


class TestTuneScanConfig:
    BASE = ScanConfig(window=6, m=5, max_iters=50)

    def test_single_cell_substituted(self):
        grid = CvGrid(rho_bars=(0.1,), epsilons=(2.0,))
        cfg, table = tune_scan_config(3, self.BASE, grid, pilots=2, seed=0)
        assert (cfg.rho_bar, cfg.epsilon) == (0.1, 2.0)
        assert cfg.window == 6 and cfg.m == 5
        assert len(table) == 1

    def test_picks_minimum_average(self):
        grid = CvGrid(rho_bars=(0.0, 0.1), epsilons=(0.3, 3.0))
        cfg, table = tune_scan_config(4, self.BASE, grid, pilots=3, seed=1)
        best = min(r["risk"] for r in table)
        chosen = [r for r in table if (r["rho_bar"], r["epsilon"]) == (cfg.rho_bar, cfg.epsilon)]
        assert chosen[0]["risk"] == best
        assert len(table) == 4

    def test_deterministic(self):
        grid = CvGrid(rho_bars=(0.0, 0.1), epsilons=(1.0,))
        a = tune_scan_config(1, self.BASE, grid, pilots=2, seed=5)
        b = tune_scan_config(1, self.BASE, grid, pilots=2, seed=5)
        assert a == b

    def test_bad_pilots(self):
        with pytest.raises(ValueError):
            tune_scan_config(1, self.BASE, pilots=0)


class TestMnist:
    def test_batch_one_matches_empirical_risk(self):
        res = run_mnist(IMAGES, LABELS, (1, 2), 5, [1, 2], batches=20, trials=1, config=QUICK, seed=4)
        data = load_idx(IMAGES, LABELS, (1, 2))
        model, t0, t1 = mnist_trial([data[1].points, data[2].points], 5, QUICK, make_rng(4, 0))
        assert res["risk"][1]["mean_risk"] == empirical_risk(model, t0, t1, 1)

    def test_missing_digit(self):
        with pytest.raises(ValueError):
            run_mnist(IMAGES, LABELS, (1, 11), trials=1, config=QUICK)


class TestToy:
    def test_inputs_and_spread(self):
        assert TOY_H0 == (0.39, -0.23) and TOY_H1 == (0.74, 1.62)
        res = run_toy_lfd(m=200)
        assert [r.epsilon for r in res] == [0.01, 0.1, 1.0]
        for k in ("p0", "p1"):
            spread = [DiscreteDistribution(r.lfd.atoms, getattr(r.lfd, k)).std() for r in res]
            assert spread[0] < spread[1] < spread[2]
        lfd = res[0].lfd
        pts = np.array(TOY_H0 + TOY_H1)
        assert mass_within(lfd.atoms, lfd.p0, pts, 0.5) >= 0.95
        assert mass_within(lfd.atoms, lfd.p1, pts, 0.5) >= 0.95

    def test_tsv(self):
        lfd = run_toy_lfd(epsilons=(0.1,), m=5)[0].lfd
        lines = lfd_tsv(lfd).splitlines()
        assert lines[0].split("\t") == ["x0", "p0", "p1", "r", "Tstar"]
        assert len(lines) == 1 + 20
