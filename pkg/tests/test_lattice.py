import numpy as np
import pytest
from scipy import stats

from gigkdv import dist, lattice, maps
from gigkdv.errors import DomainError
from gigkdv.rng import rng_stream

P12 = maps.MapParams(1.0, 2.0)


def small_config(n=200, t=12, seed=3, **kwargs):
    return lattice.stationary_config(P12, lam=0.5, c1=1.0, c2=1.0,
                                     n_sites=n, horizon=t, seed=seed, **kwargs)


class TestEvolve:
    def test_single_cell(self):
        cfg = lattice.LatticeConfig(1, 1, P12, dist.GigParams(0.5, 1, 1),
                                    dist.GigParams(0.5, 2, 1), seed=3)
        frames = list(lattice.evolve(cfg))
        assert [f.t for f in frames] == [0, 1]
        y0 = dist.draw(cfg.y_law(1), rng_stream(3, 13), 1)[0]
        u, v = maps.f_dk(P12, (frames[0].x_row[0], y0))
        assert frames[1].x_row[0] == u
        assert frames[1].y_row[0] == v

    def test_cellwise_involution(self):
        frames = list(lattice.evolve(small_config()))
        for t in range(1, len(frames)):
            x_in = frames[t - 1].x_row[1:]     # x[n, t-1], n >= 2
            y_in = frames[t].y_row[:-1]        # y[n-1, t]
            back_x, back_y = maps.f_dk(P12, (frames[t].x_row[1:],
                                             frames[t].y_row[1:]))
            assert np.allclose(back_x, x_in, rtol=1e-12)
            assert np.allclose(back_y, y_in, rtol=1e-12)

    def test_cellwise_conservation(self):
        frames = list(lattice.evolve(small_config()))
        for t in range(1, len(frames)):
            prod_in = frames[t - 1].x_row[1:] * frames[t].y_row[:-1]
            prod_out = frames[t].x_row[1:] * frames[t].y_row[1:]
            assert np.max(np.abs(prod_out - prod_in) / prod_in) <= 1e-13

    def test_deterministic_and_positive(self):
        f1 = list(lattice.evolve(small_config()))
        f2 = list(lattice.evolve(small_config()))
        for a, b in zip(f1, f2):
            assert np.array_equal(a.x_row, b.x_row)
            assert np.array_equal(a.y_row, b.y_row)
            assert np.all(a.x_row > 0.0) and np.all(a.y_row > 0.0)

    def test_strip_mode_matches_single_block(self, monkeypatch):
        whole = [(f.x_row.copy(), f.y_row.copy())
                 for f in lattice.evolve(small_config())]
        monkeypatch.setattr(lattice, "_BUFFER_CELLS", 1000)  # forces strips
        strips = [(f.x_row.copy(), f.y_row.copy())
                  for f in lattice.evolve(small_config())]
        for (xa, ya), (xb, yb) in zip(whole, strips):
            assert np.array_equal(xa, xb)
            assert np.array_equal(ya, yb)

    def test_replay_boundary(self, tmp_path):
        cfg = small_config()
        arrays = lattice._boundary_arrays(cfg)
        path = tmp_path / "boundary.csv"
        lattice.save_boundary(path, *arrays)
        replayed = lattice.LatticeConfig(
            cfg.n_sites, cfg.horizon, cfg.map, cfg.x_marginal, cfg.y_marginal,
            x_marginal_odd=cfg.x_marginal_odd, y_marginal_odd=cfg.y_marginal_odd,
            seed=999, boundary=lattice.Replay(str(path)),
            expect_stationary=True)
        for a, b in zip(lattice.evolve(cfg), lattice.evolve(replayed)):
            assert np.array_equal(a.x_row, b.x_row)
            assert np.array_equal(a.y_row, b.y_row)

    def test_replay_size_mismatch(self, tmp_path):
        cfg = small_config()
        path = tmp_path / "boundary.csv"
        lattice.save_boundary(path, *lattice._boundary_arrays(cfg))
        other = lattice.LatticeConfig(
            cfg.n_sites + 1, cfg.horizon, cfg.map, cfg.x_marginal,
            cfg.y_marginal, boundary=lattice.Replay(str(path)))
        with pytest.raises(DomainError):
            list(lattice.evolve(other))

    def test_config_validation(self):
        with pytest.raises(DomainError):
            lattice.LatticeConfig(0, 5, P12, dist.GigParams(0.5, 1, 1),
                                  dist.GigParams(0.5, 1, 1))
        with pytest.raises(DomainError):
            lattice.LatticeConfig(5, 5, P12, dist.GigParams(0.5, 1, 1),
                                  dist.GigParams(0.5, 1, 1), boundary="weird")


class TestStationarity:
    def test_symmetric_case_passes(self):
        cfg = lattice.stationary_config(P12, lam=0.5, c1=1.0, c2=1.0,
                                        n_sites=20_000, horizon=12, seed=9)
        rep = lattice.stationarity_report(cfg, [6, 12])
        assert rep.passed, rep.tests

    def test_asymmetric_parity_marginals(self):
        # type-II parameters: interior marginals alternate by parity of n+t
        cfg = lattice.stationary_config(P12, lam=0.5, c1=1.0, c2=3.0,
                                        n_sites=20_000, horizon=10, seed=10)
        rep = lattice.stationarity_report(cfg, [5, 10])
        assert rep.passed, rep.tests
        frames = {f.t: f for f in lattice.evolve(cfg) if f.t in (0, 10)}
        n_idx = np.arange(1, cfg.n_sites + 1)
        even = (n_idx + 10) % 2 == 0
        law_even = dist.GigParams(-0.5, 1.0, 3.0)   # the x input law
        law_odd = dist.GigParams(-0.5, 3.0, 1.0)    # its c1 <-> c2 swap
        x = frames[10].x_row
        assert stats.kstest(x[even], lambda v: dist.cdf(law_even, v)).pvalue > 0.01
        assert stats.kstest(x[~even], lambda v: dist.cdf(law_odd, v)).pvalue > 0.01
        # and the classes genuinely differ
        assert stats.kstest(x[even], lambda v: dist.cdf(law_odd, v)).pvalue < 1e-6

    def test_perturbed_config_drifts(self):
        base = lattice.stationary_config(P12, lam=0.5, c1=1.0, c2=1.0,
                                         n_sites=20_000, horizon=12, seed=9)
        xl, xo = base.x_marginal, base.x_marginal_odd
        pert = lattice.LatticeConfig(
            base.n_sites, base.horizon, base.map,
            dist.GigParams(xl.lam, xl.a / 2.0, 2.0 * xl.b), base.y_marginal,
            x_marginal_odd=dist.GigParams(xo.lam, xo.a / 2.0, 2.0 * xo.b),
            y_marginal_odd=base.y_marginal_odd, seed=9, expect_stationary=True)
        rep = lattice.stationarity_report(pert, [6, 12])
        assert not rep.passed

    def test_probe_validation(self):
        cfg = small_config()
        with pytest.raises(DomainError):
            lattice.stationarity_report(cfg, [0])
        with pytest.raises(DomainError):
            lattice.stationarity_report(cfg, [99])
        plain = lattice.LatticeConfig(10, 5, P12, dist.GigParams(0.5, 1, 1),
                                      dist.GigParams(0.5, 1, 1))
        with pytest.raises(DomainError):
            lattice.stationarity_report(plain, [5])

    def test_report_dict(self):
        rep = lattice.stationarity_report(small_config(n=2000), [6])
        d = rep.to_dict()
        assert d["probe_times"] == [6]
        assert {"field", "t", "parity", "p_value"} <= set(d["tests"][0])
