import numpy as np
import pytest
from scipy import integrate

from prbmlab import ensemble as E
from prbmlab import profiles as P
from prbmlab import spectral as S
from prbmlab.errors import InsufficientDataError


def _sample(n=64, alpha=1.0, w=4, seed=0):
    prof = P.build_power_law_profile(alpha, w, n)
    return prof, E.sample_prbm(prof, E.RngStream(seed))


class TestEigendecompose:
    def test_zero_matrix(self):
        samp = E.HermitianSample(np.zeros((5, 5), dtype=complex), "zero", 0)
        dec = S.eigendecompose(samp)
        np.testing.assert_array_equal(dec.eigenvalues, np.zeros(5))
        resid = samp.matrix @ dec.eigenvectors - dec.eigenvectors * dec.eigenvalues
        assert np.max(np.abs(resid)) == 0.0

    def test_diagonal_matrix(self):
        samp = E.HermitianSample(np.diag([1.0, 2.0, 3.0]).astype(complex), "diag", 0)
        dec = S.eigendecompose(samp)
        np.testing.assert_allclose(dec.eigenvalues, [1, 2, 3], atol=1e-14)
        np.testing.assert_allclose(np.abs(dec.eigenvectors), np.eye(3), atol=1e-14)

    def test_trace_identity_and_invariants(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        h = (a + a.conj().T) / 2
        dec = S.eigendecompose(E.HermitianSample(h, "rand", 0))
        assert abs(np.trace(h) - dec.eigenvalues.sum()) <= 1e-10
        # residual and orthonormality invariants
        resid = h @ dec.eigenvectors - dec.eigenvectors * dec.eigenvalues
        hnorm = np.linalg.norm(h, 2)
        assert np.max(np.linalg.norm(resid, axis=0)) <= 1e-8 * hnorm
        gram = dec.eigenvectors.conj().T @ dec.eigenvectors
        assert np.max(np.abs(gram - np.eye(6))) <= 1e-10

    def test_cap(self):
        samp = E.HermitianSample(np.zeros((4, 4), dtype=complex), "zero", 0)
        with pytest.raises(ValueError):
            S.eigendecompose(samp, cap=3)


class TestLocalizationLength:
    def test_delta_vector(self):
        for n in (10, 99):
            psi = np.zeros(n)
            psi[7] = 1.0
            assert S.localization_length(psi) == 0

    def test_uniform_vector(self):
        # enumeration oracle: N=8, mass 1/2; 5-site window has 5/8, 3-site 3/8
        psi = np.full(8, np.sqrt(1 / 8))
        assert S.localization_length(psi, 0.5) == 2

    def test_antipodal_spikes_tie(self):
        psi = np.zeros(100)
        psi[0] = psi[50] = np.sqrt(0.5)
        assert S.localization_length(psi, 0.5) == 0  # ">= mass" tie convention

    def test_invariance_under_shift_and_reflection(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            v = rng.standard_normal(31) + 1j * rng.standard_normal(31)
            v /= np.linalg.norm(v)
            base = S.localization_length(v)
            assert S.localization_length(np.roll(v, 11)) == base
            assert S.localization_length(v[::-1]) == base

    def test_monotone_in_mass(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(64)
        v /= np.linalg.norm(v)
        lens = [S.localization_length(v, m) for m in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a <= b for a, b in zip(lens, lens[1:]))

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            S.localization_length(np.ones(8))

    def test_sup_norm_bounds(self):
        flat = np.full(16, 1 / 4.0)
        assert S.sup_norm_sq(flat[:, None])[0] == pytest.approx(1 / 16)
        spike = np.zeros(16)
        spike[3] = 1.0
        assert S.sup_norm_sq(spike[:, None])[0] == 1.0


class TestBulkFilter:
    def test_kappa_two_boundary(self):
        dec = S.SpectralDecomposition(np.array([-1.0, 0.0, 2.0]), np.eye(3))
        assert list(S.bulk_filter(dec, 2.0)) == [1]  # only exact zero survives

    def test_simple(self):
        dec = S.SpectralDecomposition(np.array([-3.0, 0.0, 3.0]), np.eye(3))
        assert list(S.bulk_filter(dec, 0.1)) == [1]

    def test_gue_bulk_fraction(self):
        # oracle: integral of the semicircle density over |E| <= 1.9
        frac_expected, _ = integrate.quad(lambda x: np.sqrt(4 - x * x) / (2 * np.pi), -1.9, 1.9)
        samp = E.sample_gue(512, E.RngStream(4))
        dec = S.eigendecompose(samp)
        frac = len(S.bulk_filter(dec, 0.1)) / 512
        assert abs(frac - frac_expected) <= 0.03


class TestQueObservable:
    def test_uniform_vector_exact_zero(self):
        prof = P.build_power_law_profile(1.0, 4, 32)
        psi = np.full(32, np.sqrt(1 / 32))
        assert S.que_observable(prof, 5, psi, psi) == pytest.approx(0.0, abs=1e-15)

    def test_rank_one_profile_orthogonal(self):
        prof = P.uniform_profile(16)
        a = np.zeros(16, dtype=complex)
        b = np.zeros(16, dtype=complex)
        a[0] = 1.0
        b[1] = 1.0
        assert S.que_observable(prof, 3, a, b) == pytest.approx(0.0, abs=1e-15)

    def test_dense_sum_oracle(self):
        prof = P.build_power_law_profile(1.5, 4, 64)
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.standard_normal((64, 2)) + 1j * rng.standard_normal((64, 2)))
        psi_i, psi_j = q[:, 0], q[:, 1]
        x = 9
        direct = sum(prof.entry(x, a) * np.conj(psi_i[a]) * psi_j[a] for a in range(64))
        assert S.que_observable(prof, x, psi_i, psi_j) == pytest.approx(direct, abs=1e-12)


class TestSpacingRatios:
    def test_equal_spacing(self):
        lam = np.linspace(-1.5, 1.5, 200)
        assert S.spacing_ratio_statistic(lam, 0.1) == pytest.approx(1.0)

    def test_poisson_oracle(self):
        # i.i.d. uniform spectrum: mean ratio -> 2 ln 2 - 1
        rng = np.random.default_rng(6)
        vals = [
            S.spacing_ratio_statistic(np.sort(rng.uniform(-2, 2, 2000)), 0.1)
            for _ in range(8)
        ]
        assert abs(np.mean(vals) - (2 * np.log(2) - 1)) <= 0.01

    def test_insufficient_bulk(self):
        with pytest.raises(InsufficientDataError):
            S.spacing_ratio_statistic(np.linspace(3, 4, 100), 0.1)


class TestSemicircle:
    def test_cdf_endpoints(self):
        assert S.semicircle_cdf(-2.0) == pytest.approx(0.0, abs=1e-14)
        assert S.semicircle_cdf(0.0) == pytest.approx(0.5, abs=1e-14)
        assert S.semicircle_cdf(2.0) == pytest.approx(1.0, abs=1e-14)

    def test_ks_of_semicircle_sample(self):
        # inverse-CDF sampling oracle
        rng = np.random.default_rng(7)
        u = rng.uniform(0, 1, 20000)
        grid = np.linspace(-2, 2, 4001)
        samp = np.interp(u, S.semicircle_cdf(grid), grid)
        assert S.ks_distance_semicircle(samp) <= 0.02


def test_localization_report_rows():
    prof, samp = _sample(n=32, seed=8)
    dec = S.eigendecompose(samp)
    report = S.localization_report(dec, kappa=0.1, mass=0.5)
    assert len(report.rows) == 32
    for k, lam, ell, sup, is_bulk in report.rows:
        assert 0 <= ell <= 16
        assert 1 / 32 - 1e-12 <= sup <= 1.0
        assert is_bulk == (abs(lam) <= 1.9)


def test_localization_report_to_rows():
    prof, samp = _sample(n=16, seed=10)
    report = S.localization_report(S.eigendecompose(samp))
    rows = report.to_rows()
    assert len(rows) == 16
    assert set(rows[0]) == set(S.LocalizationReport.columns())
