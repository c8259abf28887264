"""Eigendecomposition and eigenvector/eigenvalue statistics.

Localization lengths use the smallest circular window (periodic distance)
whose best placement captures at least the requested l^2 mass; spacing-ratio
statistics give the GUE-vs-Poisson universality proxy.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

EIGEN_CAP_DEFAULT = 8192
NORM_TOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sample_seed: int = 0

    @property
    def N(self):
        return len(self.eigenvalues)


def eigendecompose(sample, cap=EIGEN_CAP_DEFAULT):
    """Dense Hermitian eigensolve of one sample."""
    n = sample.N
    if n > cap:
        raise ValueError(f"matrix size {n} exceeds eigensolve cap {cap}")
    try:
        w, v = np.linalg.eigh(sample.matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise np.linalg.LinAlgError(
            f"eigensolve failed for sample seed={sample.seed} stream={sample.stream_index}: {exc}"
        ) from exc
    return SpectralDecomposition(w, v, sample.seed)


def localization_length(psi, mass=0.5):
    """Smallest window radius whose best circular placement holds >= mass.

    Ties included (">= mass"); radius capped at floor(N/2), where the window
    is the full circle.
    """
    psi = np.asarray(psi)
    w = np.abs(psi) ** 2
    total = w.sum()
    if abs(math.sqrt(total) - 1.0) > NORM_TOL:
        raise ValueError(f"input vector is not normalized: ||psi|| = {math.sqrt(total)}")
    if not 0.0 < mass < 1.0:
        raise ValueError("mass threshold must lie in (0, 1)")
    n = len(w)
    doubled = np.concatenate([w, w])
    prefix = np.concatenate([[0.0], np.cumsum(doubled)])
    starts = np.arange(n)

    def best_mass(ell):
        size = min(2 * ell + 1, n)
        return np.max(prefix[starts + size] - prefix[starts])

    lo, hi = 0, n // 2
    if best_mass(0) >= mass:
        return 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if best_mass(mid) >= mass:
            hi = mid
        else:
            lo = mid
    return hi


def localization_lengths(eigenvectors, mass=0.5):
    """Per-column localization lengths of an (N, K) eigenvector matrix."""
    return np.array(
        [localization_length(eigenvectors[:, k], mass) for k in range(eigenvectors.shape[1])]
    )


def sup_norm_sq(eigenvectors):
    """Per-column sup-norm squared max_x |psi(x)|^2."""
    return np.max(np.abs(eigenvectors) ** 2, axis=0)


def bulk_filter(decomposition, kappa):
    """Sorted indices k with |lambda_k| <= 2 - kappa."""
    if not 0.0 < kappa < 2.0 + 1e-15:
        raise ValueError("kappa must lie in (0, 2]")
    lam = decomposition.eigenvalues
    return np.flatnonzero(np.abs(lam) <= 2.0 - kappa)


def que_observable(profile, x, psi_i, psi_j):
    """sum_a S_{xa} conj(psi_i(a)) psi_j(a) - delta_ij / N."""
    row = profile.row(x)
    val = np.sum(row * np.conj(psi_i) * psi_j)
    same = 1.0 if psi_i is psi_j or np.array_equal(psi_i, psi_j) else 0.0
    return val - same / profile.N


def spacing_ratios(eigenvalues, kappa):
    """Consecutive-gap ratios r_k = min(s_k, s_{k+1})/max(s_k, s_{k+1}) in the bulk."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    inside = np.abs(lam) <= 2.0 - kappa
    # a ratio at k touches lam[k], lam[k+1], lam[k+2]
    ok = inside[:-2] & inside[1:-1] & inside[2:]
    s = np.diff(lam)
    s0, s1 = s[:-1][ok], s[1:][ok]
    hi = np.maximum(s0, s1)
    lo = np.minimum(s0, s1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / hi, 1.0)
    return r


def spacing_ratio_statistic(decomposition, kappa, min_bulk=50):
    """Mean spacing ratio over the bulk; needs >= min_bulk bulk eigenvalues."""
    lam = getattr(decomposition, "eigenvalues", decomposition)
    n_bulk = int(np.sum(np.abs(np.asarray(lam)) <= 2.0 - kappa))
    if n_bulk < min_bulk:
        raise InsufficientDataError(
            f"only {n_bulk} bulk eigenvalues (< {min_bulk}) at kappa={kappa}"
        )
    return float(np.mean(spacing_ratios(lam, kappa)))


def semicircle_cdf(x):
    """CDF of the semicircle law on [-2, 2]."""
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    return 0.5 + (x * np.sqrt(4.0 - x * x) / 2.0 + 2.0 * np.arcsin(x / 2.0)) / (2.0 * np.pi)


def ks_distance_semicircle(eigenvalues):
    """Kolmogorov-Smirnov distance of pooled eigenvalues to the semicircle CDF."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float).ravel())
    n = len(lam)
    cdf = semicircle_cdf(lam)
    grid = np.arange(1, n + 1) / n
    return float(np.max(np.maximum(np.abs(cdf - grid), np.abs(cdf - (grid - 1.0 / n)))))


@dataclass
class LocalizationReport:
    """Per-eigenvector localization data for one decomposed sample."""

    seed: int
    rows: list  # (k, lambda, loc_len, sup_norm_sq, is_bulk)

    @staticmethod
    def columns():
        return ["seed", "k", "lambda", "loc_len", "sup_norm_sq", "is_bulk"]

    def to_rows(self):
        """Rows as dicts matching the CSV contract."""
        return [
            {"seed": self.seed, "k": k, "lambda": lam, "loc_len": ell,
             "sup_norm_sq": sup, "is_bulk": bulk}
            for k, lam, ell, sup, bulk in self.rows
        ]


def localization_report(decomposition, kappa=0.1, mass=0.5):
    lam = decomposition.eigenvalues
    lengths = localization_lengths(decomposition.eigenvectors, mass)
    sups = sup_norm_sq(decomposition.eigenvectors)
    bulk = np.abs(lam) <= 2.0 - kappa
    rows = [
        (k, float(lam[k]), int(lengths[k]), float(sups[k]), bool(bulk[k]))
        for k in range(len(lam))
    ]
    return LocalizationReport(decomposition.sample_seed, rows)
