import json
import math

import numpy as np
import pytest

from prbmlab import experiments as X
from prbmlab.errors import ConfigError, InsufficientDataError


def _cfg(**kw):
    base = dict(experiment_id="localization", alphas=[3.0], Ws=[4, 6], N=64,
                replicas=2, root_seed=7)
    base.update(kw)
    return X.ExperimentConfig(**base)


class TestConfig:
    def test_rejects_unknown_keys(self):
        doc = dict(experiment_id="localization", alphas=[1.0], Ws=[4], N=64, replicas=1, bogus=1)
        with pytest.raises(ConfigError):
            X.ExperimentConfig.from_json(json.dumps(doc))

    def test_rejects_bad_bandwidth(self):
        with pytest.raises(ConfigError):
            _cfg(Ws=[40])

    def test_rejects_empty_grids(self):
        with pytest.raises(ConfigError):
            _cfg(experiment_id="locallaw", etas=[], energies=[0.0])
        with pytest.raises(ConfigError):
            _cfg(alphas=[])
        with pytest.raises(ConfigError):
            _cfg(replicas=0)

    def test_hash_is_stable(self):
        a, b = _cfg(), _cfg()
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != _cfg(root_seed=8).config_hash()


class TestLocalizationScan:
    def test_rows_and_determinism(self):
        cfg = _cfg()
        rows, failures = X.run_localization_scan(cfg)
        assert not failures
        assert len(rows) == len(cfg.cells()) * cfg.replicas
        assert set(rows[0]) >= set(X.LOCALIZATION_COLUMNS)
        rows2, _ = X.run_localization_scan(cfg, threads=2)
        assert rows == rows2
        # seeds unique across cells and replicas
        seeds = [r["seed"] for r in rows]
        assert len(set(seeds)) == len(seeds)


class TestResidualScans:
    def test_locallaw_row_contract(self):
        cfg = _cfg(experiment_id="locallaw", Ws=[4], etas=[0.3], energies=[0.0], replicas=1)
        rows, failures = X.run_local_law_scan(cfg)
        assert not failures
        assert {r["stat_id"] for r in rows} == {"entrywise_sq_max", "entrywise_max", "averaged_max"}
        for r in rows:
            assert set(r) == set(X.RESIDUAL_COLUMNS)
            assert np.isfinite(r["value"])

    def test_diffusion_scan_stats(self):
        cfg = _cfg(experiment_id="diffusion", Ws=[4], etas=[0.3], energies=[0.0], replicas=1)
        rows, failures = X.run_diffusion_scan(cfg)
        assert not failures
        kinds = {r["stat_id"].split(":")[0] for r in rows}
        assert kinds == {"loop", "tvar"}
        suffixes = {r["stat_id"].rsplit(":", 1)[1] for r in rows}
        assert suffixes == {"max", "mean", "p99"}


class TestUniversalityScan:
    def test_sources_and_values(self):
        cfg = _cfg(experiment_id="universality", alphas=[0.5], Ws=[16], N=256, replicas=2)
        rows, failures = X.run_universality_scan(cfg)
        assert not failures
        assert {r["source"] for r in rows} == {"prbm", "gue"}
        for r in rows:
            assert 0.3 < r["mean_r"] < 0.8
            assert r["n_bulk"] >= 50


class TestFitExponent:
    def test_noiseless_square_law(self):
        rows = [dict(alpha=2.0, W=w, N=10**9, median_loc_len=3.0 * w * w)
                for w in (4, 8, 16, 32) for _ in range(5)]
        fit = X.fit_exponent(rows, 2.0)
        assert fit.slope == pytest.approx(2.0, abs=1e-3)
        assert fit.ci_low <= fit.slope <= fit.ci_high
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.points_used == 4

    def test_noisy_cubic_law(self):
        rng = np.random.default_rng(3)
        rows = [dict(alpha=2.0, W=w, N=10**9, median_loc_len=0.5 * w**3 * rng.lognormal(0, 0.1))
                for w in (4, 8, 16, 32) for _ in range(20)]
        fit = X.fit_exponent(rows, 2.0)
        assert fit.ci_low <= 3.0 <= fit.ci_high

    def test_saturation_exclusion(self):
        # cells with median >= N/4 are dropped; fewer than 3 left -> error
        rows = [dict(alpha=2.0, W=w, N=100, median_loc_len=ell)
                for w, ell in ((4, 6), (8, 12), (16, 24), (32, 99))]
        fit = X.fit_exponent(rows, 2.0)
        assert fit.points_used == 3
        rows_sat = [dict(alpha=2.0, W=w, N=100, median_loc_len=90) for w in (4, 8, 16, 32)]
        with pytest.raises(InsufficientDataError):
            X.fit_exponent(rows_sat, 2.0)

    def test_alpha_filter(self):
        with pytest.raises(InsufficientDataError):
            X.fit_exponent([dict(alpha=1.0, W=4, N=100, median_loc_len=5)], 2.0)

    def test_accepts_csv_strings(self):
        rows = [dict(alpha="2.0", W="4", N="1000", median_loc_len="16.0"),
                dict(alpha="2.0", W="8", N="1000", median_loc_len="64.0"),
                dict(alpha="2.0", W="16", N="1000", median_loc_len="230.0")]
        fit = X.fit_exponent(rows, 2.0)
        assert 1.8 <= fit.slope <= 2.2


class TestCertificationRunner:
    def test_rows_and_doubling(self):
        rows, reports = X.run_certification(3.0, 8, [64, 128], kind="student_t:3")
        assert {r["bound_id"] for r in rows} == {
            "theta_upper", "theta_xi_upper", "theta_difference", "zero_mode_removed"
        }
        big_rows = [r for r in rows if r["N"] == 128]
        assert all(r["stable_flag"] for r in big_rows)


def test_csv_roundtrip(tmp_path):
    rows = [dict(a=1, b=2.5), dict(a=3, b=-1.0)]
    path = tmp_path / "t.csv"
    X.write_csv(path, ["a", "b"], rows)
    back = X.read_csv(path)
    assert back == [dict(a="1", b="2.5"), dict(a="3", b="-1.0")]
