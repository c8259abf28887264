"""Matrix Brownian motion under the renormalized spectral-parameter flow.

The matrix grows as cumulative Gaussian increments H_t = H_s + dH(t - s)
(exact sampling at checkpoints, no time-discretization error), while the
spectral parameter moves along z_t = E + (1 - t) m(E).  The deterministic
resolvent limit is then t-independent, and a target resolvent G(z) is
reachable in law as sqrt(t_f) G_{t_f} with t_f = |m(z)|^2.
"""

import math
from dataclasses import dataclass

import numpy as np

from .deterministic import m_sc, parse_charge
from .ensemble import HermitianSample, sample_mbm_increment, sample_prbm
from .errors import BulkViolationError, ConvergenceError
from .loops import (
    greens_pair,
    k_loop_row,
    l_loop_matrix,
    charge_product,
    t_diag_matrix,
    theta_diag_row,
)
from .profiles import periodic_distances
from .spectral import eigendecompose

ETA_FLOOR = 1e-3


def z_flow(energy, t):
    """Renormalized spectral parameter z_t = E + (1 - t) m(E)."""
    if not -2.0 < energy < 2.0:
        raise BulkViolationError(f"flow energy {energy} outside the bulk (-2, 2)")
    if not 0.0 <= t <= 1.0:
        raise ValueError("flow time must lie in [0, 1]")
    return energy + (1.0 - t) * m_sc(energy)


def eta_flow(energy, t):
    """Im z_t = (1 - t) Im m(E)."""
    return (1.0 - t) * m_sc(energy).imag


def flow_params_for_target(z, check_tol=1e-10):
    """(t_f, E) with t_f = |m(z)|^2 and E = -2 Re m(z)/|m(z)|; z_{t_f}(E) = sqrt(t_f) z."""
    z = complex(z)
    if z.imag <= 0:
        raise BulkViolationError("target spectral parameter must have Im z > 0")
    m = m_sc(z)
    t_f = abs(m) ** 2
    energy = -2.0 * m.real / abs(m)
    resid = abs(z_flow(energy, t_f) - math.sqrt(t_f) * z)
    if resid > check_tol:
        raise ConvergenceError(
            f"flow-parameter identity failed: |z_tf(E) - sqrt(tf) z| = {resid:.3e} "
            f"(z={z}, t_f={t_f}, E={energy})"
        )
    return t_f, energy


def default_checkpoints(t_final, levels=6):
    """Geometric grid in (1 - t): {(1 - 2^-k) t_f} plus the endpoint."""
    ts = [(1.0 - 2.0**-k) * t_final for k in range(levels)]
    ts.append(t_final)
    return ts


@dataclass
class FlowState:
    """Snapshot of the matrix flow at one checkpoint."""

    t: float
    energy: float
    matrix: np.ndarray
    z: complex
    decomposition: object
    gpair: dict

    @property
    def eta(self):
        return self.z.imag


def simulate_flow(profile, energy, checkpoints, rng):
    """Exact-sampling flow states at ascending checkpoints in [0, 1).

    The state at t = 0 is the zero matrix with the scalar resolvent
    G_0 = m(E) I attached (no eigensolve needed).
    """
    checkpoints = [float(t) for t in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be strictly ascending")
    if checkpoints and not (0.0 <= checkpoints[0] and checkpoints[-1] < 1.0):
        raise ValueError("checkpoints must lie in [0, 1)")
    n = profile.N
    states = []
    h = np.zeros((n, n), dtype=complex)
    t_prev = 0.0
    m_e = m_sc(energy)
    for k, t in enumerate(checkpoints):
        if t > t_prev:
            h = h + sample_mbm_increment(profile, t - t_prev, rng.child(k))
        z = z_flow(energy, t)
        if t == 0.0:
            g0 = m_e * np.eye(n)
            gpair = {"+": g0, "-": g0.conj().T}
            dec = None
        else:
            dec = eigendecompose(HermitianSample(h, profile.label, rng.root_seed, rng.stream_index))
            gpair = greens_pair(dec, z, source=f"flow-t={t:g}")
        states.append(FlowState(t, energy, h.copy(), z, dec, gpair))
        t_prev = t
    return states


def flow_loop_normalizer(shape, t, r):
    """Regime normalizer for |L_t - K_t| along the flow (B_t = B(1-t, .)).

    alpha < 0 carries a flow statement only in its flat window
    1 - t <= (W/N)^(1+alpha), where the normalizer is [N(1-t)]^(-7/4);
    outside it the generic B_t(0) B_t form is reported as a fallback.
    """
    a = shape.alpha
    eta = 1.0 - t
    if a >= 1:
        return shape.B(eta, 0.0) * shape.B(eta, r), "B_t(0)*B_t"
    if a >= 0:
        return shape.B(eta, 0.0) ** 0.2 * shape.B(eta, r), "B_t(0)^(1/5)*B_t"
    if eta <= shape.eta_flat():
        return (shape.N * eta) ** (-7.0 / 4.0), "flat:(N(1-t))^-7/4"
    return shape.B(eta, 0.0) * shape.B(eta, r), "fallback:B_t(0)*B_t"


def flow_t_normalizer(shape, t, r):
    a = shape.alpha
    eta = 1.0 - t
    if a >= 1:
        return shape.B(eta, 0.0) ** 0.5 * shape.B(eta, r), "B_t(0)^(1/2)*B_t"
    if a >= 0:
        return shape.B(eta, 0.0) ** 0.7 * shape.B(eta, r) ** 0.5, "B_t(0)^(7/10)*B_t^(1/2)"
    if eta <= shape.eta_flat():
        return (shape.N * eta) ** (-3.0 / 2.0), "flat:(N(1-t))^-3/2"
    return shape.B(eta, 0.0) ** 0.5 * shape.B(eta, r), "fallback:B_t(0)^(1/2)*B_t"


def track_observables(profile, shape, states, loop_specs, t_specs, seed=0):
    """Time series of normalized (L - K) and (T - Theta) residuals plus Ward rows.

    loop_specs / t_specs are (charge_pair, x, y) triples; rows come back as
    dicts matching the time-series CSV contract
    (seed, t, spec_id, residual, normalizer).
    """
    rows = []
    dist = periodic_distances(profile.N)
    for state in states:
        m_e = m_sc(state.energy)
        eta_t = state.eta
        for charge, x, y in loop_specs:
            charge = parse_charge(charge)
            mm = charge_product(m_e, charge)
            lval = l_loop_matrix(profile, state.gpair, charge)[x, y]
            kval = k_loop_row(profile, mm, state.t)[(y - x) % profile.N]
            r = float(dist[(x - y) % profile.N])
            norm, norm_id = flow_loop_normalizer(shape, state.t, r)
            rows.append(
                dict(seed=seed, t=state.t, spec_id=f"loop:{charge}:{x},{y}",
                     residual=abs(lval - kval) / norm, normalizer=norm_id)
            )
        for charge, x, y in t_specs:
            charge = parse_charge(charge)
            mm = charge_product(m_e, charge)
            tval = t_diag_matrix(profile, state.gpair, charge)[x, y]
            thval = theta_diag_row(profile, mm, state.t)[(y - x) % profile.N]
            r = float(dist[(x - y) % profile.N])
            norm, norm_id = flow_t_normalizer(shape, state.t, r)
            rows.append(
                dict(seed=seed, t=state.t, spec_id=f"tvar:{charge}:{x},{y}",
                     residual=abs(tval - thval) / norm, normalizer=norm_id)
            )
        # Ward consistency of the cached resolvent at this checkpoint
        g = state.gpair["+"]
        target = (g - g.conj().T) / (2j * eta_t)
        denom = np.max(np.abs(target))
        ward = float(np.max(np.abs(g.conj().T @ g - target)) / denom) if denom > 0 else 0.0
        rows.append(dict(seed=seed, t=state.t, spec_id="ward", residual=ward, normalizer="exact"))
    return rows


def distributional_check(profile, z, replicas, rng, eta_floor=ETA_FLOOR):
    """Compare direct-sample statistics of G(z) with flow-sample sqrt(t_f) G_{t_f}.

    Statistics: Tr G / N, the (0,0) entry, and Im G at the middle site.  The
    two arms use disjoint seed ranges; reported are standardized mean
    differences (difference over pooled standard error), per real/imag part.
    """
    z = complex(z)
    if z.imag < eta_floor:
        raise BulkViolationError(f"Im z = {z.imag} below the eta floor {eta_floor}")
    if replicas < 100:
        raise ValueError("need at least 100 replicas per arm")
    t_f, energy = flow_params_for_target(z)
    z_t = z_flow(energy, t_f)
    n = profile.N
    mid = n // 2

    def stats_of(g):
        return np.array([np.trace(g) / n, g[0, 0], g[mid, mid].imag])

    direct = np.empty((replicas, 3), dtype=complex)
    flowed = np.empty((replicas, 3), dtype=complex)
    eye = np.eye(n)
    for k in range(replicas):
        h = sample_prbm(profile, rng.child(0, k)).matrix
        direct[k] = stats_of(np.linalg.solve(h - z * eye, eye))
        h_t = math.sqrt(t_f) * sample_prbm(profile, rng.child(1, k)).matrix
        flowed[k] = stats_of(math.sqrt(t_f) * np.linalg.solve(h_t - z_t * eye, eye))

    report = {"t_f": t_f, "energy": energy, "replicas": replicas, "stats": {}}
    names = ["trace_over_N", "entry_00", "im_entry_mid"]
    for j, name in enumerate(names):
        for part, fn in (("re", np.real), ("im", np.imag)):
            a, b = fn(direct[:, j]), fn(flowed[:, j])
            se = math.sqrt(a.var(ddof=1) / replicas + b.var(ddof=1) / replicas)
            dz = (a.mean() - b.mean()) / se if se > 0 else 0.0
            report["stats"][f"{name}:{part}"] = {
                "mean_direct": float(a.mean()),
                "mean_flow": float(b.mean()),
                "standardized_diff": float(dz),
            }
    report["max_standardized_diff"] = max(
        abs(v["standardized_diff"]) for v in report["stats"].values()
    )
    return report
