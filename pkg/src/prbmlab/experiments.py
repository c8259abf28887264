"""Batch experiment orchestration: scans, exponent fits, CSV/manifest output.

Every replica's randomness derives from (root_seed, cell_index, replica,
tag), so scans reproduce byte-identical CSV bodies for a fixed config no
matter how many workers run them.
"""

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .deterministic import ShapeParameters, m_sc, certify_assumption_bounds, doubling_stability
from .ensemble import RngStream, sample_gue, sample_prbm
from .errors import ConfigError, InsufficientDataError
from .loops import (
    SamplingPlan,
    averaged_local_law_residual,
    diffusion_residual,
    entrywise_local_law_residual,
    greens_pair,
    resolvent,
)
from .profiles import build_power_law_profile, build_profile_function, cauchy_density, student_t_density
from .spectral import (
    bulk_filter,
    eigendecompose,
    localization_lengths,
    spacing_ratio_statistic,
    sup_norm_sq,
)

_CONFIG_KEYS = {
    "experiment_id": str,
    "alphas": list,
    "Ws": list,
    "N": int,
    "replicas": int,
    "kappa": float,
    "etas": list,
    "energies": list,
    "mass": float,
    "root_seed": int,
    "out": str,
    "profile_kind": str,
}

EXPERIMENT_IDS = ("localization", "locallaw", "diffusion", "universality")


@dataclass
class ExperimentConfig:
    experiment_id: str
    alphas: list
    Ws: list
    N: int
    replicas: int
    kappa: float = 0.1
    etas: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    mass: float = 0.5
    root_seed: int = 0
    out: str = ""
    profile_kind: str = "power_law"

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ConfigError(f"unknown experiment_id {self.experiment_id!r}")
        if not self.alphas or not self.Ws:
            raise ConfigError("alpha and W lists must be non-empty")
        if self.experiment_id in ("locallaw", "diffusion") and (not self.etas or not self.energies):
            raise ConfigError("eta and energy grids must be non-empty for resolvent scans")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not 0 < self.mass < 1:
            raise ConfigError("mass threshold must lie in (0, 1)")
        for w in self.Ws:
            if not 1 <= w <= self.N / 2:
                raise ConfigError(f"require 1 <= W <= N/2; got W={w}, N={self.N}")

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        unknown = set(doc) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def canonical_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def cells(self):
        return [(a, w) for a in self.alphas for w in self.Ws]


def build_profile(alpha, W, N, kind="power_law"):
    if kind == "power_law":
        return build_power_law_profile(alpha, W, N)
    if kind == "cauchy":
        return build_profile_function(cauchy_density(), W, N)
    if kind.startswith("student_t"):
        nu = float(kind.split(":")[1]) if ":" in kind else alpha
        return build_profile_function(student_t_density(nu), W, N)
    raise ConfigError(f"unknown profile kind {kind!r}")


def _run_cells(tasks, worker, threads):
    """Run (index, task) pairs on a bounded pool; gather in index order."""
    results = [None] * len(tasks)
    failures = []
    if threads <= 1:
        for i, task in enumerate(tasks):
            try:
                results[i] = worker(task)
            except Exception as exc:  # cell failure recorded, scan continues
                failures.append((task, f"{type(exc).__name__}: {exc}"))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, task) for task in tasks]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    failures.append((tasks[i], f"{type(exc).__name__}: {exc}"))
    rows = [r for r in results if r is not None]
    return rows, failures


def _seed_label(root, cell, replica):
    return f"{root}:{cell}:{replica}"


def run_localization_scan(config, threads=1):
    """Per-replica bulk localization medians for each (alpha, W) cell."""
    root = RngStream(config.root_seed)
    tasks = [
        (ci, alpha, w, rep)
        for ci, (alpha, w) in enumerate(config.cells())
        for rep in range(config.replicas)
    ]

    def worker(task):
        ci, alpha, w, rep = task
        prof = build_profile(alpha, w, config.N, config.profile_kind)
        samp = sample_prbm(prof, root.child(ci, rep))
        dec = eigendecompose(samp)
        bulk = bulk_filter(dec, config.kappa)
        vecs = dec.eigenvectors[:, bulk]
        lens = localization_lengths(vecs, config.mass)
        sups = sup_norm_sq(vecs)
        return dict(
            alpha=alpha,
            W=w,
            N=config.N,
            seed=_seed_label(config.root_seed, ci, rep),
            replica=rep,
            median_loc_len=float(np.median(lens)),
            median_sup_norm_sq=float(np.median(sups)),
        )

    return _run_cells(tasks, worker, threads)


LOCALIZATION_COLUMNS = ["alpha", "W", "N", "seed", "replica", "median_loc_len", "median_sup_norm_sq"]
RESIDUAL_COLUMNS = ["alpha", "W", "N", "eta", "E", "stat_id", "value", "normalizer_id", "seed"]
UNIVERSALITY_COLUMNS = ["alpha", "W", "N", "seed", "source", "n_bulk", "mean_r"]
CERTIFY_COLUMNS = ["bound_id", "t", "fitted_C", "N", "stable_flag"]
KLOOP_COLUMNS = ["n", "alpha", "t", "N", "constant", "stable_flag"]


def run_local_law_scan(config, threads=1):
    """Entrywise/averaged local-law residual statistics over the z grid."""
    root = RngStream(config.root_seed)
    tasks = [
        (ci, alpha, w, rep)
        for ci, (alpha, w) in enumerate(config.cells())
        for rep in range(config.replicas)
    ]

    def worker(task):
        ci, alpha, w, rep = task
        prof = build_profile(alpha, w, config.N, config.profile_kind)
        shape = ShapeParameters(prof.alpha, w, config.N)
        dec = eigendecompose(sample_prbm(prof, root.child(ci, rep)))
        out = []
        for energy in config.energies:
            for eta in config.etas:
                z = complex(energy, eta)
                g = resolvent(dec, z).G
                m = m_sc(z)
                sq = entrywise_local_law_residual(g, m, shape, eta)
                avg = averaged_local_law_residual(prof, g, m, shape, eta)
                base = dict(alpha=alpha, W=w, N=config.N, eta=eta, E=energy,
                            seed=_seed_label(config.root_seed, ci, rep))
                out.append(dict(base, stat_id="entrywise_sq_max", value=sq, normalizer_id="B(eta,r)"))
                out.append(dict(base, stat_id="entrywise_max", value=math.sqrt(sq),
                                normalizer_id="sqrt(B(eta,r))"))
                out.append(dict(base, stat_id="averaged_max", value=avg, normalizer_id="B(eta,0)"))
        return out

    nested, failures = _run_cells(tasks, worker, threads)
    return [row for chunk in nested for row in chunk], failures


def run_diffusion_scan(config, threads=1, plan=None):
    """Normalized loop/T-variable residual statistics over the z grid."""
    root = RngStream(config.root_seed)
    plan = plan or SamplingPlan(seed=config.root_seed)
    tasks = [
        (ci, alpha, w, rep)
        for ci, (alpha, w) in enumerate(config.cells())
        for rep in range(config.replicas)
    ]

    def worker(task):
        ci, alpha, w, rep = task
        prof = build_profile(alpha, w, config.N, config.profile_kind)
        shape = ShapeParameters(prof.alpha, w, config.N)
        dec = eigendecompose(sample_prbm(prof, root.child(ci, rep)))
        out = []
        for energy in config.energies:
            for eta in config.etas:
                z = complex(energy, eta)
                gp = greens_pair(dec, z)
                stats, _ = diffusion_residual(prof, gp, shape, z, plan)
                base = dict(alpha=alpha, W=w, N=config.N, eta=eta, E=energy,
                            seed=_seed_label(config.root_seed, ci, rep))
                for st in stats:
                    for suffix, val in (("max", st.max), ("mean", st.mean), ("p99", st.p99)):
                        out.append(dict(base, stat_id=f"{st.stat_id}:{suffix}", value=val,
                                        normalizer_id=st.normalizer_id))
        return out

    nested, failures = _run_cells(tasks, worker, threads)
    return [row for chunk in nested for row in chunk], failures


def run_universality_scan(config, threads=1):
    """Mean bulk spacing ratios per cell plus a GUE oracle reference at matched N."""
    root = RngStream(config.root_seed)
    tasks = [
        (ci, alpha, w, rep, source)
        for ci, (alpha, w) in enumerate(config.cells())
        for rep in range(config.replicas)
        for source in ("prbm", "gue")
    ]

    def worker(task):
        ci, alpha, w, rep, source = task
        if source == "prbm":
            prof = build_profile(alpha, w, config.N, config.profile_kind)
            samp = sample_prbm(prof, root.child(ci, rep, 0))
        else:
            samp = sample_gue(config.N, root.child(ci, rep, 1))
        lam = np.linalg.eigvalsh(samp.matrix)
        n_bulk = int(np.sum(np.abs(lam) <= 2.0 - config.kappa))
        mean_r = spacing_ratio_statistic(lam, config.kappa)
        return dict(alpha=alpha, W=w, N=config.N,
                    seed=_seed_label(config.root_seed, ci, rep),
                    source=source, n_bulk=n_bulk, mean_r=mean_r)

    return _run_cells(tasks, worker, threads)


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    r_squared: float
    points_used: int

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def _ols_loglog(ws, meds):
    x = np.log(np.asarray(ws, dtype=float))
    y = np.log(np.asarray(meds, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_exponent(rows, alpha, n_boot=1000, seed=0, saturation_frac=0.25):
    """OLS of log median localization length against log W, with bootstrap CI.

    ``rows`` are localization-scan rows (dicts); saturated cells (cell median
    >= saturation_frac * N) are excluded; needs >= 3 distinct W after that.
    """
    rows = [r for r in rows if math.isclose(float(r["alpha"]), alpha)]
    if not rows:
        raise InsufficientDataError(f"no rows at alpha={alpha}")
    n_sys = int(rows[0]["N"])
    cells = {}
    for r in rows:
        cells.setdefault(int(r["W"]), []).append(float(r["median_loc_len"]))
    usable = {
        w: vals for w, vals in cells.items()
        if np.median(vals) < saturation_frac * n_sys
    }
    if len(usable) < 3:
        raise InsufficientDataError(
            f"only {len(usable)} unsaturated W cells (need >= 3); "
            f"saturation cut at {saturation_frac} * N = {saturation_frac * n_sys}"
        )
    ws = sorted(usable)
    meds = [float(np.median(usable[w])) for w in ws]
    slope, intercept, r2 = _ols_loglog(ws, meds)

    rng = np.random.Generator(np.random.Philox(seed))
    boot = np.empty(n_boot)
    for b in range(n_boot):
        med_b = [
            float(np.median(rng.choice(usable[w], size=len(usable[w]), replace=True)))
            for w in ws
        ]
        boot[b], _, _ = _ols_loglog(ws, med_b)
    ci_low, ci_high = np.percentile(boot, [2.5, 97.5])
    return ExponentFit(slope, intercept, float(ci_low), float(ci_high), r2, len(ws))


def run_certification(alpha, W, Ns, kind="student_t", c0=0.1):
    """Certification rows over one or more N (doubling flags across successive N)."""
    reports = []
    for n_sys in Ns:
        prof = build_profile(alpha, W, n_sys, kind)
        reports.append(certify_assumption_bounds(prof, c0=c0))
    for small, big in zip(reports, reports[1:]):
        doubling_stability(small, big)
    rows = []
    for rep in reports:
        for row in rep.rows:
            rows.append(dict(bound_id=row.bound_id, t=row.t, fitted_C=row.fitted_C,
                             N=row.N, stable_flag=row.stable_flag))
    return rows, reports


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, config, failures, started, finished):
    doc = {
        "config_hash": config.config_hash(),
        "code_version": __version__,
        "started": started,
        "finished": finished,
        "cells_failed": [f"{task}: {msg}" for task, msg in failures],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def utc_now():
    return datetime.now(timezone.utc).isoformat()


SCAN_RUNNERS = {
    "localization": (run_localization_scan, LOCALIZATION_COLUMNS),
    "locallaw": (run_local_law_scan, RESIDUAL_COLUMNS),
    "diffusion": (run_diffusion_scan, RESIDUAL_COLUMNS),
    "universality": (run_universality_scan, UNIVERSALITY_COLUMNS),
}
