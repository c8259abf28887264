"""Variance profiles on the discrete circle Z_N.

A profile is the doubly stochastic symmetric matrix S of entry variances,
stored as its circulant generator ``kernel[r] = S_{0,r}``.  Two families are
provided: the exact power-law kernel (|r|_N/W + 1)^(-1-alpha) / Z_alpha, and
kernels induced by wrapping an even probability density f around the circle,
S_{0,r} = (1/Z) sum_n f((r + n N)/W).
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ProfileError, TruncationError

ROW_SUM_TOL = 1e-12
WRAP_REL_TOL = 1e-14
MAX_WRAPS = 10**6
DENSE_GUARD_N = 4096


def periodic_distance(x, y, N):
    """Distance on the circle Z_N: min(|x-y|, N-|x-y|)."""
    if not (0 <= x < N and 0 <= y < N):
        raise ValueError(f"site indices must lie in [0, {N}): got {x}, {y}")
    d = abs(x - y)
    return min(d, N - d)


def periodic_distances(N):
    """Vector of |r|_N for r = 0..N-1."""
    r = np.arange(N)
    return np.minimum(r, N - r)


@dataclass(frozen=True)
class ProfileDensity:
    """Even probability density used to induce a variance profile.

    ``tail_exponent`` is the alpha for which f(x) <= C (1+|x|)^(-1-alpha):
    nu for Student's t, 1 for Cauchy.
    """

    density_id: str
    tail_exponent: float
    nu: float | None = None

    def _norm(self):
        nu = self.nu
        return math.gamma((nu + 1) / 2) / (math.sqrt(nu * math.pi) * math.gamma(nu / 2))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.density_id == "cauchy":
            return 1.0 / (np.pi * (1.0 + x * x))
        if self.density_id == "student_t":
            nu = self.nu
            return self._norm() * (1.0 + x * x / nu) ** (-(nu + 1) / 2)
        raise ProfileError(f"unknown density_id {self.density_id!r}")

    def pdf_prime(self, x):
        x = np.asarray(x, dtype=float)
        if self.density_id == "cauchy":
            return -2.0 * x / (np.pi * (1.0 + x * x) ** 2)
        if self.density_id == "student_t":
            nu = self.nu
            return self._norm() * (-(nu + 1) * x / nu) * (1.0 + x * x / nu) ** (-(nu + 3) / 2)
        raise ProfileError(f"unknown density_id {self.density_id!r}")

    def survival(self, x):
        """Exact upper-tail mass P(X > x); used to complete wrap-sum tails."""
        x = np.asarray(x, dtype=float)
        if self.density_id == "cauchy":
            return 0.5 - np.arctan(x) / np.pi
        if self.density_id == "student_t":
            from scipy import stats

            return stats.t.sf(x, self.nu)
        raise ProfileError(f"unknown density_id {self.density_id!r}")

    def validate(self, quad_tol=1e-8):
        """Check evenness, nonnegativity, unit mass, and the tail envelope."""
        xs = np.linspace(-50, 50, 2001)
        vals = self.pdf(xs)
        if np.any(vals < 0):
            raise ProfileError("density must be nonnegative")
        if np.max(np.abs(vals - self.pdf(-xs))) > 1e-14:
            raise ProfileError("density must be even")
        mass, _ = integrate.quad(lambda u: float(self.pdf(u)), -np.inf, np.inf)
        if abs(mass - 1.0) > quad_tol:
            raise ProfileError(f"density mass {mass} deviates from 1 beyond {quad_tol}")
        # fitted envelope constant f(x) (1+|x|)^(1+alpha); must stay bounded
        env = vals * (1.0 + np.abs(xs)) ** (1.0 + self.tail_exponent)
        return float(np.max(env))


def student_t_density(nu):
    if nu <= 0:
        raise ProfileError("Student-t degrees of freedom must be positive")
    return ProfileDensity("student_t", tail_exponent=float(nu), nu=float(nu))


def cauchy_density():
    return ProfileDensity("cauchy", tail_exponent=1.0)


@dataclass(frozen=True)
class VarianceProfile:
    """Circulant variance profile S on Z_N.

    kernel[r] = S_{0,r}; symmetric under r -> N-r, nonnegative, row sum 1.
    """

    alpha: float
    W: int
    N: int
    kind: str
    kernel: np.ndarray
    normalizer: float

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        object.__setattr__(self, "kernel", k)
        if k.shape != (self.N,):
            raise ProfileError("kernel must have length N")
        if np.any(k < 0):
            raise ProfileError("kernel entries must be nonnegative")
        if abs(k.sum() - 1.0) > ROW_SUM_TOL:
            raise ProfileError(f"kernel row sum {k.sum()} deviates from 1")
        if np.max(np.abs(k - k[(-np.arange(self.N)) % self.N])) > 0:
            raise ProfileError("kernel must be symmetric under r -> N-r")

    @property
    def label(self):
        return f"{self.kind}:alpha={self.alpha:g}:W={self.W}:N={self.N}"

    def entry(self, x, y):
        return self.kernel[(x - y) % self.N]

    def row(self, x):
        """Row S_{x,.} as a length-N vector."""
        return np.roll(self.kernel, x)

    def dense(self):
        """Materialize S as a dense matrix (guarded for large N)."""
        if self.N > DENSE_GUARD_N:
            raise ProfileError(f"refusing to materialize N={self.N} > {DENSE_GUARD_N} dense matrix")
        idx = (np.arange(self.N)[:, None] - np.arange(self.N)[None, :]) % self.N
        return self.kernel[idx]

    def apply(self, v, axis=0):
        """Apply S to a vector/tensor along ``axis`` by circular convolution (FFT)."""
        v = np.asarray(v)
        fk = np.fft.fft(self.kernel)
        shape = [1] * v.ndim
        shape[axis] = self.N
        out = np.fft.ifft(np.fft.fft(v, axis=axis) * fk.reshape(shape), axis=axis)
        if not np.iscomplexobj(v):
            return out.real
        return out

    def eigenvalues(self):
        return profile_eigenvalues(self)

    def to_json(self):
        doc = {
            "alpha": self.alpha,
            "W": self.W,
            "N": self.N,
            "kind": self.kind,
            "kernel": [float(v) for v in self.kernel],
        }
        return json.dumps(doc)


def build_power_law_profile(alpha, W, N):
    """Exact power-law profile: kernel[r] = (|r|_N/W + 1)^(-1-alpha) / Z_alpha."""
    alpha = float(alpha)
    W = int(W)
    N = int(N)
    if alpha <= -1:
        raise ProfileError("alpha must exceed -1 (normalization not summable otherwise)")
    if N < 2:
        raise ProfileError("N must be at least 2")
    if W < 1 or W > N / 2:
        raise ProfileError(f"require 1 <= W <= N/2, got W={W}, N={N}")
    raw = (periodic_distances(N) / W + 1.0) ** (-1.0 - alpha)
    z = raw.sum()
    return VarianceProfile(alpha, W, N, "power_law_exact", raw / z, float(z))


def _wrap_sum(density, W, N):
    """Evaluate sum_n f((r + n N)/W) for r = 0..N-1.

    Direct summation over |n| <= n_max, with both tails completed by the
    Euler-Maclaurin formula (exact survival function, first derivative term);
    n_max doubles until the completed values are stable to WRAP_REL_TOL.
    Heavy tails make a bare term-size cutoff hopeless at 1e-14 relative, so
    the tolerance is enforced on the completed value instead.
    """
    r = np.arange(N, dtype=float)

    def tail(first_arg):
        # sum_{k>=0} f(x + k h) with x = first_arg/W, h = N/W
        x = first_arg / W
        return (
            density.survival(x) * (W / N)
            + density.pdf(x) / 2.0
            - (N / W) * density.pdf_prime(x) / 12.0
        )

    acc = density.pdf(r / W)
    prev = None
    n = 1
    while n <= MAX_WRAPS:
        acc = acc + density.pdf((r + n * N) / W) + density.pdf((r - n * N) / W)
        if n >= 16 and (n & (n - 1)) == 0:
            cur = acc + tail(r + (n + 1) * N) + tail((n + 1) * N - r)
            if prev is not None and np.max(np.abs(cur - prev) / cur) < WRAP_REL_TOL:
                return cur
            prev = cur
        n += 1
    raise TruncationError(
        f"wrap sum did not meet tail tolerance within {MAX_WRAPS} wraps "
        f"(density={density.density_id}, W={W}, N={N})"
    )


def build_profile_function(density, W, N):
    """Profile induced by an even density: kernel[r] ~ sum_n f((r + n N)/W)."""
    W = int(W)
    N = int(N)
    if N < 2 or W < 1 or W > N / 2:
        raise ProfileError(f"require 1 <= W <= N/2 and N >= 2, got W={W}, N={N}")
    density.validate()
    raw = _wrap_sum(density, W, N)
    raw = 0.5 * (raw + raw[(-np.arange(N)) % N])  # exact circulant symmetry
    z = raw.sum()
    kind = f"profile_function:{density.density_id}" + (
        f":nu={density.nu:g}" if density.nu is not None else ""
    )
    return VarianceProfile(float(density.tail_exponent), W, N, kind, raw / z, float(z))


def uniform_profile(N):
    """Flat profile S_{xy} = 1/N (mean-field / GUE variance structure)."""
    return VarianceProfile(0.0, max(1, N // 2), N, "uniform", np.full(N, 1.0 / N), float(N))


def profile_eigenvalues(profile):
    """Eigenvalues psi(p) of S, p in (2pi/N) Z_N, via the DFT of the kernel."""
    psi_c = np.fft.fft(profile.kernel)
    if np.max(np.abs(psi_c.imag)) > 1e-12:
        raise ProfileError("profile kernel is not symmetric: complex DFT eigenvalues")
    psi = psi_c.real
    if abs(psi[0] - 1.0) > 1e-12:
        raise ProfileError(f"psi(0) = {psi[0]} deviates from 1")
    if np.max(np.abs(psi)) > 1.0 + 1e-12:
        raise ProfileError("profile spectrum exceeds 1 in modulus")
    return psi


def spectral_gap_constant(profile):
    """Numerically fitted spectral-gap constant; reported, never assumed.

    For alpha >= 0: the c in 1 - psi(p) >= c * min(|W p|, 1)^(alpha ^ 2) over
    p != 0.  For alpha < 0 (flat-profile regime) the relevant quantity is the
    gap of spec(S) away from +-1 on nonzero modes: 1 - max_{p != 0} |psi(p)|.
    """
    N, W, alpha = profile.N, profile.W, profile.alpha
    psi = profile_eigenvalues(profile)
    mask = np.arange(N) != 0
    if alpha < 0:
        return float(1.0 - np.max(np.abs(psi[mask])))
    p = 2.0 * np.pi * np.fft.fftfreq(N)  # in (-pi, pi]
    s = np.minimum(np.abs(W * p[mask]), 1.0) ** min(alpha, 2.0)
    return float(np.min((1.0 - psi[mask]) / s))


def profile_from_json(text):
    doc = json.loads(text)
    kind = doc["kind"]
    kernel = np.asarray(doc["kernel"], dtype=float)
    if kind == "power_law_exact":
        rebuilt = build_power_law_profile(doc["alpha"], doc["W"], doc["N"])
    elif kind.startswith("profile_function:"):
        parts = kind.split(":")
        if parts[1] == "cauchy":
            dens = cauchy_density()
        elif parts[1] == "student_t":
            dens = student_t_density(float(parts[2].split("=")[1]))
        else:
            raise ProfileError(f"unknown profile-function kind {kind!r}")
        rebuilt = build_profile_function(dens, doc["W"], doc["N"])
    elif kind == "uniform":
        rebuilt = uniform_profile(doc["N"])
    else:
        raise ProfileError(f"unknown profile kind {kind!r}")
    if np.max(np.abs(rebuilt.kernel - kernel)) > 1e-12:
        raise ProfileError("serialized kernel disagrees with rebuilt profile")
    return rebuilt
