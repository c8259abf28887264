"""Deterministic K-hat loop tensors, their ODE oracle, and tree combinatorics.

The order-(n+1) tensor satisfies a two-term recursion: a boundary term that
extends the order-n tensor through the resolvent (1 - t m1 m_{n+1} S)^{-1},
plus a sum over splittings k = 2..n coupling two lower-order tensors through
S.  The same tensors solve a first-order ODE hierarchy driven by cut-and-glue
index operations; integrating that hierarchy with fixed-step RK4 provides the
independent oracle.  Non-crossing trees on the cyclically ordered vertices
index the tree-shaped decay factor that bounds the S-smoothed loops.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .deterministic import charge_value, m_sc, parse_charge
from .errors import (
    BulkViolationError,
    ConvergenceError,
    NearSingularError,
    UnsupportedRegimeError,
)
from .profiles import periodic_distances

_LETTERS = "abcdefgh"

FULL_TENSOR_CAPS = ((2, 4096), (3, 64), (4, 32))
POINTWISE_ORDER_CAP = 4
POINTWISE_N_CAP = 128
ODE_ORDER_CAP = 3
ODE_N_CAP = 32
NCT_CAP = 9


def _check_full_caps(order, N):
    for cap_order, cap_n in FULL_TENSOR_CAPS:
        if order <= cap_order and N <= cap_n:
            return
    raise ValueError(f"full-tensor mode unsupported at order {order}, N={N}")


class KhatCalculator:
    """Memoized K-hat tensors at fixed (profile, bulk energy, time)."""

    def __init__(self, profile, energy, t):
        if not -2.0 < energy < 2.0:
            raise BulkViolationError(f"energy {energy} outside the bulk (-2, 2)")
        if not 0.0 <= t < 1.0:
            raise ValueError("time must lie in [0, 1)")
        self.profile = profile
        self.energy = float(energy)
        self.t = float(t)
        self.m = m_sc(energy)
        self.N = profile.N
        self._S = profile.dense()
        self._psi = np.real(np.fft.fft(profile.kernel))
        self._tensors = {}
        self._vecs = {}
        self._resolvents = {}

    def _m(self, sign):
        return charge_value(self.m, sign)

    def resolvent_matrix(self, s_first, s_last):
        """Dense (1 - t m(s_first) m(s_last) S)^{-1}."""
        key = s_first + s_last
        if key not in self._resolvents:
            c = self.t * self._m(s_first) * self._m(s_last)
            denom = 1.0 - c * self._psi
            if np.min(np.abs(denom)) < 1e-10:
                raise NearSingularError(f"resolvent nearly singular for charges {key}")
            row = np.fft.ifft(1.0 / denom)
            idx = (np.arange(self.N)[None, :] - np.arange(self.N)[:, None]) % self.N
            self._resolvents[key] = row[idx]
        return self._resolvents[key]

    # -- full-tensor recursion -------------------------------------------------

    def tensor(self, charge):
        """Full K-hat tensor for the given charge string (axes = site slots)."""
        sigma = parse_charge(charge)
        if sigma in self._tensors:
            return self._tensors[sigma]
        L = len(sigma)
        if L == 1:
            out = np.full(self.N, self._m(sigma))
        else:
            _check_full_caps(L, self.N)
            out = self._recursion_full(sigma)
        self._tensors[sigma] = out
        return out

    def _recursion_full(self, sigma):
        L = len(sigma)
        m1 = self._m(sigma[0])
        R = self.resolvent_matrix(sigma[0], sigma[-1])
        lower = self.tensor(sigma[1:])
        if L == 2:
            out = m1 * lower[:, None] * R  # lower is the constant m(sigma2) vector
        else:
            perm = np.moveaxis(lower, -1, 0)  # axes (x1, x2..x_{L-1})
            sub = f"{_LETTERS[: L - 1]},{_LETTERS[0]}{_LETTERS[L - 1]}->{_LETTERS[:L]}"
            out = m1 * np.einsum(sub, perm, R)
        for k in range(2, L):
            a = self.tensor(sigma[:k])
            b = self.tensor(sigma[k - 1 :])
            a_s = np.tensordot(a, self._S, axes=([-1], [0]))
            sub = (
                f"{_LETTERS[: k - 1]}x,{_LETTERS[k - 1 : L - 1]}x,"
                f"x{_LETTERS[L - 1]}->{_LETTERS[:L]}"
            )
            out = out + self.t * m1 * np.einsum(sub, a_s, b, R)
        return out

    # -- pointwise recursion ---------------------------------------------------

    def _vec(self, sigma, prefix):
        """K-hat values along the last site slot, other slots fixed by prefix."""
        key = (sigma, prefix)
        if key in self._vecs:
            return self._vecs[key]
        L = len(sigma)
        if L == 1:
            out = np.full(self.N, self._m(sigma))
        elif L == 2:
            out = self._m(sigma[0]) * self._m(sigma[1]) * self.resolvent_matrix(
                sigma[0], sigma[-1]
            )[prefix[0], :]
        else:
            m1 = self._m(sigma[0])
            R = self.resolvent_matrix(sigma[0], sigma[-1])
            x1 = prefix[0]
            boundary = self._vec(sigma[1:], prefix[1:])[x1]
            out = m1 * boundary * R[x1, :]
            for k in range(2, L):
                a = self._vec(sigma[:k], prefix[: k - 1])
                b = self._vec(sigma[k - 1 :], prefix[k - 1 :])
                w = (self._S @ a) * b
                out = out + self.t * m1 * (w @ R)
        self._vecs[key] = out
        return out

    def value(self, charge, sites):
        """Pointwise K-hat value (memoizes lower-order slices)."""
        sigma = parse_charge(charge)
        sites = tuple(int(x) % self.N for x in sites)
        if len(sigma) != len(sites):
            raise ValueError("charge and site tuple lengths differ")
        if len(sigma) > POINTWISE_ORDER_CAP or self.N > POINTWISE_N_CAP:
            raise ValueError(
                f"pointwise mode capped at order {POINTWISE_ORDER_CAP}, N <= {POINTWISE_N_CAP}"
            )
        return complex(self._vec(sigma, sites[:-1])[sites[-1]])


def khat_recursive(profile, energy, t, charge, sites):
    """One K-hat entry via the recursion (convenience wrapper)."""
    return KhatCalculator(profile, energy, t).value(charge, sites)


# -- ODE oracle ----------------------------------------------------------------


def _cut_glue_charges(sigma):
    """Charge tuples generated by one cut-and-glue application (k < l, 1-based)."""
    L = len(sigma)
    out = []
    for k in range(1, L + 1):
        for l in range(k + 1, L + 1):
            out.append(sigma[l - 1 :] + sigma[:k])  # G_L
            out.append(sigma[k - 1 : l])  # G_R
    return out


def _charge_closure(sigma):
    seen = {sigma}
    frontier = [sigma]
    while frontier:
        nxt = []
        for s in frontier:
            if len(s) < 2:
                continue
            for child in _cut_glue_charges(s):
                if child not in seen:
                    seen.add(child)
                    nxt.append(child)
        frontier = nxt
    return sorted(s for s in seen if len(s) >= 2)


def _delta_tensor(N, order, value):
    out = np.zeros((N,) * order, dtype=complex)
    idx = np.arange(N)
    out[tuple(idx for _ in range(order))] = value
    return out


def _hierarchy_derivative(state, S):
    """Right-hand side of the K-hat evolution for every tensor in ``state``."""
    deriv = {}
    for sigma, tensor in state.items():
        L = len(sigma)
        rhs = np.zeros_like(tensor)
        for k in range(1, L + 1):
            for l in range(k + 1, L + 1):
                kl = state[sigma[l - 1 :] + sigma[:k]]
                kr = state[sigma[k - 1 : l]]
                kl_s = np.tensordot(kl, S, axes=([-1], [0]))
                term = np.tensordot(kl_s, kr, axes=([-1], [-1]))
                # axes currently (x_l..x_L, x_1..x_{k-1}, x_k..x_{l-1})
                labels = list(range(l - 1, L)) + list(range(k - 1)) + list(range(k - 1, l - 1))
                term = np.transpose(term, axes=[labels.index(i) for i in range(L)])
                rhs = rhs + term
        deriv[sigma] = rhs
    return deriv


def _rk4_run(profile, energy, t, closure, n_steps):
    N = profile.N
    m = m_sc(energy)
    S = profile.dense()
    state = {
        s: _delta_tensor(N, len(s), np.prod([charge_value(m, c) for c in s]))
        for s in closure
    }
    h = t / n_steps

    def axpy(a, x, y):
        return {s: y[s] + a * x[s] for s in y}

    for _ in range(n_steps):
        k1 = _hierarchy_derivative(state, S)
        k2 = _hierarchy_derivative(axpy(h / 2, k1, state), S)
        k3 = _hierarchy_derivative(axpy(h / 2, k2, state), S)
        k4 = _hierarchy_derivative(axpy(h, k3, state), S)
        state = {
            s: state[s] + (h / 6) * (k1[s] + 2 * k2[s] + 2 * k3[s] + k4[s]) for s in state
        }
    return state


def khat_ode_oracle(profile, energy, t, charge, step=1e-3, confirm_tol=1e-8):
    """Full K-hat tensor by RK4 integration of the evolution hierarchy.

    Fixed step <= ``step`` plus one step-halving confirmation; disagreement
    beyond ``confirm_tol`` raises.  Independent oracle for the recursion.
    """
    sigma = parse_charge(charge)
    if len(sigma) > ODE_ORDER_CAP or profile.N > ODE_N_CAP:
        raise ValueError(f"ODE oracle capped at order {ODE_ORDER_CAP}, N <= {ODE_N_CAP}")
    if not -2.0 < energy < 2.0:
        raise BulkViolationError(f"energy {energy} outside the bulk (-2, 2)")
    if t == 0:
        m = m_sc(energy)
        return _delta_tensor(profile.N, len(sigma), np.prod([charge_value(m, c) for c in sigma]))
    closure = _charge_closure(sigma)
    n_steps = max(1, math.ceil(t / step))
    coarse = _rk4_run(profile, energy, t, closure, n_steps)[sigma]
    fine = _rk4_run(profile, energy, t, closure, 2 * n_steps)[sigma]
    gap = float(np.max(np.abs(coarse - fine)))
    if gap > confirm_tol:
        raise ConvergenceError(f"step halving moved the solution by {gap:.3e} > {confirm_tol}")
    return fine


# -- S-smoothed loops and Ward identity ------------------------------------------


def kloop_from_khat(khat, profile, chain=False):
    """S-smooth a K-hat tensor into K-loop (all axes) or K-chain (all but last)."""
    out = np.asarray(khat, dtype=complex)
    axes = range(out.ndim - 1) if chain else range(out.ndim)
    for ax in axes:
        out = profile.apply(out, axis=ax)
    return out


def kloop_tensor(profile, energy, t, charge, chain=False):
    calc = KhatCalculator(profile, energy, t)
    return kloop_from_khat(calc.tensor(charge), profile, chain=chain)


def kloop_ward_check(profile, energy, t, charge):
    """Max-abs residual of the K-loop Ward identity (charges with s1 != sn)."""
    sigma = parse_charge(charge)
    n = len(sigma)
    if n < 2:
        raise ValueError("Ward identity needs loop order >= 2")
    if sigma[0] == sigma[-1]:
        raise ValueError("Ward identity requires opposite first/last charges")
    m = m_sc(energy)
    if m.imag <= 0:
        raise BulkViolationError(f"energy {energy} outside the bulk: Im m = 0")
    eta_t = (1.0 - t) * m.imag
    lhs = kloop_tensor(profile, energy, t, charge).sum(axis=-1)
    reduced = sigma[1 : n - 1]
    kp = kloop_tensor(profile, energy, t, "+" + reduced)
    km = kloop_tensor(profile, energy, t, "-" + reduced)
    rhs = (kp - km) / (2j * eta_t)
    return float(np.max(np.abs(lhs - rhs)))


# -- non-crossing trees and decay factors ----------------------------------------


@dataclass(frozen=True)
class NonCrossingTree:
    """Spanning tree on cyclically ordered vertices 0..n-1 with no crossing edges."""

    n: int
    edges: tuple

    def validate(self):
        if self.n == 1:
            return len(self.edges) == 0
        if len(self.edges) != self.n - 1:
            return False
        parent = list(range(self.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                return False
            parent[find(i)] = find(j)
        if len({find(v) for v in range(self.n)}) != 1:
            return False
        return not _has_crossing(self.edges)


def _has_crossing(edges):
    for (i, j), (k, l) in itertools.combinations(edges, 2):
        if i < k < j < l or k < i < l < j:
            return True
    return False


def _prufer_edges(seq, n):
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    import heapq

    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    a, b = sorted(leaves)
    edges.append((a, b))
    return tuple(sorted(edges))


def enumerate_noncrossing_trees(n):
    """All non-crossing spanning trees on n cyclically ordered vertices."""
    if n > NCT_CAP:
        raise ValueError(f"tree enumeration capped at n <= {NCT_CAP}")
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return [NonCrossingTree(1, ())]
    out = []
    for seq in itertools.product(range(n), repeat=n - 2):
        edges = _prufer_edges(seq, n)
        if not _has_crossing(edges):
            out.append(NonCrossingTree(n, edges))
    return out


def noncrossing_tree_count(n):
    """Closed-form count binom(3n-3, n-1)/(2n-1), the independent cross-check."""
    return math.comb(3 * n - 3, n - 1) // (2 * n - 1)


def pair_decay(shape, t, r, experimental_alpha01=False):
    """Single-edge decay factor D_t(r)."""
    a = shape.alpha
    ell = shape.ell(1.0 - t)
    r = np.asarray(r, dtype=float)
    if a >= 1:
        out = (r / ell + 1.0) ** (-(1.0 + a) / 2.0)
    elif 0 < a < 1 and experimental_alpha01:
        out = (r / shape.W + 1.0) ** ((a - 1.0) / 2.0) * (r / ell + 1.0) ** (-a)
    else:
        raise UnsupportedRegimeError(
            "decay factors are defined for alpha >= 1 "
            "(alpha in (0,1) behind experimental_alpha01=True)"
        )
    return out if out.ndim else float(out)


def decay_factors(shape, t, sites, experimental_alpha01=False):
    """(cyclic-product decay factor, non-crossing-tree decay factor) at one tuple."""
    sites = tuple(int(x) for x in sites)
    n = len(sites)
    dist = periodic_distances(shape.N)

    def d_of(i, j):
        return pair_decay(shape, t, float(dist[(sites[i] - sites[j]) % shape.N]),
                          experimental_alpha01)

    if n == 1:
        return 1.0, 1.0
    loop = 1.0
    for i in range(n):
        loop *= d_of(i, (i + 1) % n)
    tree_sum = 0.0
    for tree in enumerate_noncrossing_trees(n):
        prod = 1.0
        for i, j in tree.edges:
            prod *= d_of(i, j) ** 2
        tree_sum += prod
    return float(loop), float(tree_sum)


def verify_tree_bound(profile, energy, t, charge, n_tuples=200, seed=0):
    """Fitted constant max |K-loop| / (B_t(0)^(n-1) * tree decay) over sampled tuples."""
    from .deterministic import ShapeParameters

    sigma = parse_charge(charge)
    n = len(sigma)
    shape = ShapeParameters(profile.alpha, profile.W, profile.N)
    if profile.alpha < 1:
        raise UnsupportedRegimeError("tree bound is verified for alpha >= 1")
    tensor = kloop_tensor(profile, energy, t, charge)
    b0 = shape.B(1.0 - t, 0.0) ** (n - 1)
    rng = np.random.Generator(np.random.Philox(seed))
    tuples = rng.integers(0, profile.N, size=(n_tuples, n))
    worst = 0.0
    for row in tuples:
        sites = tuple(int(v) for v in row)
        _, tdecay = decay_factors(shape, t, sites)
        ratio = abs(tensor[sites]) / (b0 * tdecay)
        worst = max(worst, float(ratio))
    return worst
