"""Resolvent observables: Green's functions, loops, T-variables, local laws.

Conventions: G(+) = G(z), G(-) = G(z)^* = G(conj z); for a charge pair
(s1, s2) the two-point loop is

    L_xy = sum_{a,b} S_xa S_yb G(s1)_ba G(s2)_ab   (= S (G(s2) o G(s1)^T) S)

and its deterministic companion K_xy = (m1 m2 S^2 / (1 - t m1 m2 S))_xy,
with t = 1 at a direct spectral parameter and t < 1 along the flow.
Ward identities tie row/column sums of these objects to Im G / eta and are
the internal-consistency oracle used throughout the tests.
"""

from dataclasses import dataclass

import numpy as np

from .deterministic import charge_value, m_sc, parse_charge, theta_row_general
from .errors import BulkViolationError
from .profiles import periodic_distances

LOOP_ORDER_CAP = 6


@dataclass(frozen=True)
class Resolvent:
    z: complex
    G: np.ndarray
    source: str = "direct"


@dataclass(frozen=True)
class LoopSpec:
    """Charge string plus site tuple identifying one loop or chain."""

    charge: str
    sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "charge", parse_charge(self.charge))
        object.__setattr__(self, "sites", tuple(int(x) for x in self.sites))
        if not 1 <= len(self.charge) <= LOOP_ORDER_CAP:
            raise ValueError(f"loop order must lie in [1, {LOOP_ORDER_CAP}]")


def resolvent(decomposition, z, source="direct"):
    """G(z) = U diag(1/(lambda - z)) U* for Im z > 0."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("resolvent requires Im z > 0")
    u = decomposition.eigenvectors
    g = (u / (decomposition.eigenvalues - z)) @ u.conj().T
    return Resolvent(z, g, source)


def identity_residual(resolvent_obj, matrix):
    """Relative residual of (H - z) G = I."""
    n = matrix.shape[0]
    res = (matrix - resolvent_obj.z * np.eye(n)) @ resolvent_obj.G - np.eye(n)
    return float(np.max(np.abs(res)))


def greens_pair(decomposition, z, source="direct"):
    """{'+': G(z), '-': G(z)*} for use with charge strings."""
    g = resolvent(decomposition, z, source).G
    return {"+": g, "-": g.conj().T}


def ward_residual_resolvent(G, eta):
    """Relative residual of G* G = Im G / eta (classic Ward identity)."""
    target = (G - G.conj().T) / (2j * eta)
    lhs = G.conj().T @ G
    return float(np.max(np.abs(lhs - target)) / np.max(np.abs(target)))


def l_loop_matrix(profile, gpair, charge):
    """All-pairs two-point loop matrix for one charge pair."""
    s = parse_charge(charge)
    m = gpair[s[1]] * gpair[s[0]].T
    return profile.apply(profile.apply(m, axis=0), axis=1)


def l_loop_2(profile, gpair, x, y, charge):
    """Single loop value via two kernel-row contractions."""
    s = parse_charge(charge)
    m = gpair[s[1]] * gpair[s[0]].T
    return complex(profile.row(x) @ m @ profile.row(y))


def k_loop_row(profile, mm, t):
    """First row of m1 m2 S^2 / (1 - t m1 m2 S)."""
    return theta_row_general(profile, t * mm, prefactor=mm, power=2)


def theta_diag_row(profile, mm, t):
    """First row of m1 m2 S / (1 - t m1 m2 S) (diagonal Theta comparison)."""
    return theta_row_general(profile, t * mm, prefactor=mm, power=1)


def charge_product(m, charge):
    s = parse_charge(charge)
    return charge_value(m, s[0]) * charge_value(m, s[1])


def k_loop_2(profile, energy, t, x, y, charge):
    """Flow-time K-loop entry (m m' S^2 / (1 - t m m' S))_{xy} at bulk energy."""
    mm = charge_product(m_sc(energy), charge)
    row = k_loop_row(profile, mm, t)
    return complex(row[(y - x) % profile.N])


def k_loop_matrix_direct(profile, z, charge):
    """All-pairs K matrix at a direct spectral parameter (t = 1, m = m(z))."""
    mm = charge_product(m_sc(z), charge)
    row = k_loop_row(profile, mm, 1.0)
    idx = (np.arange(profile.N)[None, :] - np.arange(profile.N)[:, None]) % profile.N
    return row[idx]


def t_variable(profile, gpair, x, y, yp, charge):
    """T_{x,yy'} = sum_a S_xa G(s1)_ya G(s2)_ay'."""
    s = parse_charge(charge)
    u = gpair[s[0]][y, :] * gpair[s[1]][:, yp]
    return complex(profile.row(x) @ u)


def t_diag_matrix(profile, gpair, charge):
    """Diagonal T-variables as a matrix T[x, y] = T_{x,yy}."""
    s = parse_charge(charge)
    u = gpair[s[0]].T * gpair[s[1]]
    return profile.apply(u, axis=0)


def n_loop(profile, gpair, spec):
    """Trace of the alternating product prod_i G(s_i) S^{(x_i)}."""
    if len(spec.charge) != len(spec.sites):
        raise ValueError("charge and site tuple lengths differ")
    acc = None
    for s_i, x_i in zip(spec.charge, spec.sites):
        a = gpair[s_i] * profile.row(x_i)[None, :]
        acc = a if acc is None else acc @ a
    return complex(np.trace(acc))


def n_chain(profile, gpair, charge, sites, a, b):
    """(G(s1) S^{(x1)} ... S^{(x_{n-1})} G(sn))_{ab}; sites has length n-1."""
    s = parse_charge(charge)
    if len(sites) != len(s) - 1:
        raise ValueError("an n-chain takes n-1 interior sites")
    v = gpair[s[0]][a, :].copy()
    for s_i, x_i in zip(s[1:], sites):
        v = (v * profile.row(x_i)) @ gpair[s_i]
    return complex(v[b])


def entrywise_local_law_residual(G, m, shape, eta):
    """(max |G - m I|^2 / B(eta, |x-y|),  max |sum_y S_xy G_yy - m| / B(eta, 0)).

    The first is the entrywise local-law statistic, the second the averaged
    variant.  ``shape`` supplies B; the caller chooses eta (Im z for direct
    resolvents).
    """
    n = G.shape[0]
    dist = periodic_distances(n)
    bvals = shape.B(eta, dist.astype(float))
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    diff = np.abs(G - m * np.eye(n)) ** 2
    return float(np.max(diff / bvals[idx]))


def averaged_local_law_residual(profile, G, m, shape, eta):
    avg = profile.apply(np.diag(G))
    return float(np.max(np.abs(avg - m)) / shape.B(eta, 0.0))


ALL_CHARGE_PAIRS = ("--", "-+", "+-", "++")


@dataclass
class SamplingPlan:
    """Index tuples used for residual statistics; recorded for reproducibility."""

    n_random: int = 256
    lattice_points: int = 16
    seed: int = 0

    def pairs(self, N):
        rng = np.random.Generator(np.random.Philox(self.seed))
        xs = rng.integers(0, N, size=(self.n_random, 2))
        stride = max(1, N // self.lattice_points)
        lat = np.arange(0, N, stride)
        grid = np.array([(x, y) for x in lat for y in lat])
        return np.vstack([xs, grid])


@dataclass
class ResidualStats:
    stat_id: str
    normalizer_id: str
    max: float
    mean: float
    p99: float


def _stats(stat_id, normalizer_id, values):
    v = np.asarray(values, dtype=float)
    return ResidualStats(stat_id, normalizer_id, float(v.max()), float(v.mean()), float(np.percentile(v, 99)))


def loop_normalizer(shape, z, r):
    """Regime normalizer for |L - K| at a direct spectral parameter z."""
    eta_eff = 1.0 - abs(m_sc(z)) ** 2
    a = shape.alpha
    eta = z.imag
    if a >= 1:
        return shape.B(eta_eff, 0.0) * shape.B(eta_eff, r), "B0*B"
    if a >= 0:
        if eta <= shape.eta_flat():
            val = shape.W ** (-6.0 / 5.0) + (shape.N * eta) ** (-7.0 / 4.0)
            return np.full_like(np.asarray(r, dtype=float), val), "flat:W^-6/5+(Neta)^-7/4"
        return shape.B(eta_eff, 0.0) ** 0.2 * shape.B(eta_eff, r), "B0^(1/5)*B"
    val = (shape.N * eta) ** (-7.0 / 4.0)
    return np.full_like(np.asarray(r, dtype=float), val), "flat:(Neta)^-7/4"


def t_normalizer(shape, z, r):
    """Regime normalizer for the diagonal |T - Theta| statistic."""
    eta_eff = 1.0 - abs(m_sc(z)) ** 2
    a = shape.alpha
    eta = z.imag
    if a >= 1:
        return shape.B(eta_eff, 0.0) ** 0.5 * shape.B(eta_eff, r), "B0^(1/2)*B"
    if a >= 0:
        if eta <= shape.eta_flat():
            val = shape.W ** (-6.0 / 5.0) + (shape.N * eta) ** (-3.0 / 2.0)
            return np.full_like(np.asarray(r, dtype=float), val), "flat:W^-6/5+(Neta)^-3/2"
        return shape.B(eta_eff, 0.0) ** 0.7 * shape.B(eta_eff, r) ** 0.5, "B0^(7/10)*B^(1/2)"
    val = (shape.N * eta) ** (-3.0 / 2.0)
    return np.full_like(np.asarray(r, dtype=float), val), "flat:(Neta)^-3/2"


def diffusion_residual(profile, gpair, shape, z, plan=None):
    """Normalized |L - K| and |T - Theta| statistics over sampled index pairs."""
    z = complex(z)
    if z.imag <= 0:
        raise BulkViolationError("diffusion residual requires Im z > 0")
    plan = plan or SamplingPlan()
    pairs = plan.pairs(profile.N)
    xs, ys = pairs[:, 0], pairs[:, 1]
    r = periodic_distances(profile.N)[(xs - ys) % profile.N].astype(float)
    m = m_sc(z)
    out = []
    norm_loop, loop_id = loop_normalizer(shape, z, r)
    norm_t, t_id = t_normalizer(shape, z, r)
    for charge in ALL_CHARGE_PAIRS:
        lmat = l_loop_matrix(profile, gpair, charge)
        mm = charge_product(m, charge)
        krow = k_loop_row(profile, mm, 1.0)
        resid = np.abs(lmat[xs, ys] - krow[(ys - xs) % profile.N])
        out.append(_stats(f"loop:{charge}", loop_id, resid / norm_loop))
        tmat = t_diag_matrix(profile, gpair, charge)
        trow = theta_diag_row(profile, mm, 1.0)
        tresid = np.abs(tmat[xs, ys] - trow[(ys - xs) % profile.N])
        out.append(_stats(f"tvar:{charge}", t_id, tresid / norm_t))
    return out, plan
