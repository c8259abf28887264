"""Deterministic objects: m_sc, m_t, shape parameters, propagators, certification.

Everything here is a pure function of a variance profile and scalar
parameters.  Propagators of the form  pref * S^k / (1 - c S)  are evaluated in
Fourier space through the kernel eigenvalues psi(p) and returned as circulant
first rows; dense materialization happens only on demand.
"""

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceError,
    NearSingularError,
    UnsupportedRegimeError,
)
from .profiles import periodic_distances, profile_eigenvalues

NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 200
NEAR_SINGULAR_TOL = 1e-10


def m_sc(z):
    """Stieltjes transform of the semicircle law, Im m >= 0 branch.

    Real |E| < 2 uses the explicit boundary value; real |E| > 2 the limit
    from the upper half plane (real m with |m| < 1).
    """
    z = complex(z)
    if z.imag < 0:
        raise ValueError("m_sc is defined on the closed upper half plane")
    if z.imag == 0:
        E = z.real
        if abs(E) <= 2:
            return complex(-E / 2.0, math.sqrt(4.0 - E * E) / 2.0)
        s = math.sqrt(E * E - 4.0)
        return complex((-E + s) / 2.0 if E > 0 else (-E - s) / 2.0, 0.0)
    # sqrt(z-2)sqrt(z+2) is the branch behaving like z at infinity
    return (-z + cmath.sqrt(z - 2.0) * cmath.sqrt(z + 2.0)) / 2.0


def m_t(z, t):
    """Solution of m = -(z + t m)^(-1) with Im m > 0 (Newton from m_sc)."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("m_t requires Im z > 0")
    if t == 0:
        return -1.0 / z
    m = m_sc(z)
    for _ in range(NEWTON_MAX_ITER):
        denom = z + t * m
        f = m + 1.0 / denom
        if abs(f) <= NEWTON_TOL:
            return m
        fp = 1.0 - t / (denom * denom)
        m = m - f / fp
    raise ConvergenceError(f"m_t failed to converge at z={z}, t={t}")


def charge_value(m, sign):
    """m(+) = m, m(-) = conj(m)."""
    return m if sign == "+" else np.conj(m)


def parse_charge(charge):
    """Normalize a charge vector to a '+'/'-' string (e.g. '-+', ('-','+'))."""
    if isinstance(charge, str):
        s = charge
    else:
        s = "".join("+" if c in ("+", 1, +1) else "-" for c in charge)
    if not s or any(c not in "+-" for c in s):
        raise ValueError(f"invalid charge {charge!r}")
    return s


@dataclass(frozen=True)
class ShapeParameters:
    """Shape-parameter evaluators B, B-ring, R, ell at fixed (alpha, W, N)."""

    alpha: float
    W: int
    N: int

    def ell(self, eta):
        """Characteristic length scale ell(eta)."""
        if self.alpha <= 0:
            return float(self.N)
        return float(min(self.W * eta ** (-1.0 / min(self.alpha, 2.0)), self.N))

    def B(self, eta, r):
        """Shape parameter B(eta, r); r may be an array."""
        a, W, N = self.alpha, self.W, self.N
        r = np.asarray(r, dtype=float)
        if a <= 0:
            out = (N / W) ** a / W * (r / W + 1.0) ** (-1.0 - a) + 1.0 / (N * eta)
        elif a < 1:
            ell = self.ell(eta)
            out = ((r / W + 1.0) ** (a - 1.0) / W + 1.0 / (N * eta)) * (
                r / ell + 1.0
            ) ** (-2.0 * a)
        else:
            ell = self.ell(eta)
            out = (r / ell + 1.0) ** (-1.0 - a) / (eta * ell)
        return out if out.ndim else float(out)

    def B_ring(self, eta, r):
        """Zero-mode-removed shape parameter; defined for alpha >= 0 only."""
        a, W, N = self.alpha, self.W, self.N
        if a < 0:
            raise UnsupportedRegimeError("B_ring is defined only for alpha >= 0")
        r = np.asarray(r, dtype=float)
        if a < 1:
            out = (r / W + 1.0) ** (a - 1.0) / W
        else:
            out = np.full_like(r, (N / W) ** min(a, 2.0) / N)
        return out if out.ndim else float(out)

    def R(self, eta, r):
        """First-difference parameter; defined for alpha > 0 only."""
        a, W = self.alpha, self.W
        if a <= 0:
            raise UnsupportedRegimeError("R is defined only for alpha > 0")
        r = np.asarray(r, dtype=float)
        if a < 1:
            out = (r / W + 1.0) ** (-1.0) / W
        elif a < 2:
            ell = self.ell(eta)
            out = W ** (a - 2.0) * ell ** (1.0 - a) * (r / W + 1.0) ** (a - 2.0) * (
                r / ell + 1.0
            ) ** (1.0 - a)
        else:
            ell = self.ell(eta)
            out = (r / ell + 1.0) ** (-1.0) / ell
        return out if out.ndim else float(out)

    def eta_star(self):
        a, W, N = self.alpha, self.W, self.N
        if a <= 1:
            return 1.0 / N
        if a < 2:
            return W ** (-a / (a - 1.0)) + 1.0 / N
        return W ** (-2.0) + 1.0 / N

    def W_c(self):
        a, N = self.alpha, self.N
        if a <= 1:
            return 1.0
        if a < 2:
            return N ** (1.0 - 1.0 / a)
        return math.sqrt(N)

    def eta_flat(self):
        """Onset of the flat spectral regime."""
        a, W, N = self.alpha, self.W, self.N
        if a < 0:
            return (W / N) ** (1.0 + a)
        if a < 1:
            return W / N
        return (W / N) ** min(a, 2.0)


def critical_scales(params):
    """(eta_star, W_c) for the given shape parameters."""
    return params.eta_star(), params.W_c()


def shape_for(profile):
    return ShapeParameters(profile.alpha, profile.W, profile.N)


def _fourier_row(psi, numerator, c):
    """First row of numerator(psi) / (1 - c psi) over the kernel spectrum."""
    denom = 1.0 - c * psi
    small = np.abs(denom) < NEAR_SINGULAR_TOL
    if np.any(small):
        p = int(np.argmax(small))
        raise NearSingularError(
            f"propagator denominator |1 - c psi(p)| < {NEAR_SINGULAR_TOL} at mode {p}"
        )
    return np.fft.ifft(numerator / denom)


def theta_propagator(profile, t, charge, energy):
    """First row of Theta_t = m1 m2 S / (1 - t m1 m2 S) at bulk energy.

    ``charge`` is a pair like '-+'; m(+) = m(E), m(-) = conj m(E).
    """
    s = parse_charge(charge)
    if len(s) != 2:
        raise ValueError("theta_propagator takes a charge pair")
    m = m_sc(energy)
    mm = charge_value(m, s[0]) * charge_value(m, s[1])
    if not (t * abs(mm) < 1.0 or (s[0] != s[1] and t < 1.0)):
        raise ValueError(f"precondition t |m1 m2| < 1 violated: t={t}, |mm|={abs(mm)}")
    psi = profile_eigenvalues(profile)
    return _fourier_row(psi, mm * psi, t * mm)


def theta_row_general(profile, c, prefactor=None, power=1):
    """First row of pref * S^power / (1 - c S); pref defaults to c's numerator 1."""
    psi = profile_eigenvalues(profile)
    pref = 1.0 if prefactor is None else prefactor
    return _fourier_row(psi, pref * psi**power, c)


def evolution_kernel(profile, s, t, charge, energy):
    """First row of U_{s,t} = 1 + (t-s) Theta_t (identity at s = t)."""
    if not 0 <= s <= t < 1:
        raise ValueError("require 0 <= s <= t < 1")
    row = np.zeros(profile.N, dtype=complex)
    row[0] = 1.0
    if t > s:
        row = row + (t - s) * theta_propagator(profile, t, charge, energy)
    return row


def circulant_dense(row):
    """Dense circulant matrix from its first row (A[x, y] = row[(y - x) % N])."""
    n = len(row)
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return np.asarray(row)[idx]


@dataclass
class CertificationRow:
    bound_id: str
    t: float
    fitted_C: float
    N: int
    extended_range: bool = False
    stable_flag: str = ""


@dataclass
class CertificationReport:
    """Fitted constants for the propagator bound families (report, not proof)."""

    alpha: float
    W: int
    N: int
    c0: float
    rows: list = field(default_factory=list)

    def max_constant(self, bound_id):
        vals = [r.fitted_C for r in self.rows if r.bound_id == bound_id]
        return max(vals) if vals else float("nan")

    def bound_ids(self):
        return sorted({r.bound_id for r in self.rows})


def _default_t_grid(N, points=8):
    # geometric in 1 - t from 1 down to 1/N
    k = np.linspace(0.0, math.log(N), points)
    return [float(t) for t in 1.0 - np.exp(-k)]


def _default_xi_grid(c0):
    thetas = [math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi]
    grid = []
    for th in thetas:
        for sgn in (1.0, -1.0):
            xi = cmath.exp(1j * sgn * th)
            if abs(xi - 1.0) >= c0:
                grid.append(xi)
    # dedupe xi = -1
    out = []
    for xi in grid:
        if all(abs(xi - y) > 1e-12 for y in out):
            out.append(xi)
    return out


def certify_assumption_bounds(
    profile,
    t_grid=None,
    xi_grid=None,
    c0=0.1,
    log_correction=0.0,
    max_sites=64,
):
    """Fitted constants for the four propagator bound families.

    Families: plain upper bound (S/(1-tS) vs B_t), unit-circle upper bound
    (S/(1-t xi S) vs B_0), first-order difference (vs |y-z|_W R_t B_t), and
    the zero-mode-removed bound (vs B-ring).  The last family requires
    ell_t = N; where that regime has no overlap with t <= 1 - 1/N, the grid
    extends past it (rows flagged ``extended_range``).  Report-only.
    """
    N, W, alpha = profile.N, profile.W, profile.alpha
    shape = ShapeParameters(alpha, W, N)
    psi = profile_eigenvalues(profile)
    dist = periodic_distances(N)
    t_grid = _default_t_grid(N) if t_grid is None else list(t_grid)
    xi_grid = _default_xi_grid(c0) if xi_grid is None else list(xi_grid)
    logc = math.log(N) ** log_correction if log_correction else 1.0

    report = CertificationReport(alpha, W, N, c0)

    B0 = shape.B(1.0, dist)
    for t in t_grid:
        eta = 1.0 - t
        row = _fourier_row(psi, psi, t).real
        Bt = shape.B(eta, dist)
        report.rows.append(
            CertificationRow("theta_upper", t, float(np.max(np.abs(row) / Bt)) / logc, N)
        )
        c_xi = max(
            float(np.max(np.abs(_fourier_row(psi, psi, t * xi)) / B0)) for xi in xi_grid
        )
        report.rows.append(CertificationRow("theta_xi_upper", t, c_xi / logc, N))

        if alpha > 0 and shape.ell(eta) < N:
            sites = np.unique(np.linspace(0, N - 1, max_sites).astype(int))
            y, z = np.meshgrid(sites, sites, indexing="ij")
            keep = y != z
            y, z = y[keep], z[keep]
            r1 = np.minimum(y, N - y).astype(float)
            r2 = np.minimum(z, N - z).astype(float)
            dyz = np.abs(y - z)
            dyz = np.minimum(dyz, N - dyz)
            denom = (
                (dyz + W)
                * shape.R(eta, np.maximum(r1, r2))
                * shape.B(eta, np.minimum(r1, r2))
            )
            num = np.abs(row[y] - row[z])
            report.rows.append(
                CertificationRow(
                    "theta_difference", t, float(np.max(num / denom)) / logc, N
                )
            )

    if alpha >= 0:
        flat = shape.eta_flat() if alpha > 0 else 1.0
        zm_etas = [flat, flat / 2.0, flat / 4.0] if alpha > 0 else [1.0 - t for t in t_grid]
        Bring = shape.B_ring(1.0, dist)
        for eta in zm_etas:
            t = 1.0 - eta
            if not 0.0 <= t < 1.0:
                continue
            sym = psi / (1.0 - t * psi)
            sym[0] = 0.0  # zero mode removed exactly
            row = np.fft.ifft(sym).real
            report.rows.append(
                CertificationRow(
                    "zero_mode_removed",
                    t,
                    float(np.max(np.abs(row) / Bring)) / logc,
                    N,
                    extended_range=bool(t > 1.0 - 1.0 / N),
                )
            )
    return report


def doubling_stability(report_small, report_big, ratio_cap=2.0):
    """Compare fitted constants across an N doubling; flags rows of the big report."""
    flags = {}
    for bid in report_big.bound_ids():
        c_small = report_small.max_constant(bid)
        c_big = report_big.max_constant(bid)
        if math.isnan(c_small) or math.isnan(c_big) or c_small == 0:
            flags[bid] = ""
            continue
        ratio = c_big / c_small
        flags[bid] = "stable" if ratio <= ratio_cap else f"unstable:{ratio:.3g}"
    for row in report_big.rows:
        row.stable_flag = flags.get(row.bound_id, "")
    return flags
