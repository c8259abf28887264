"""Command-line surface.

Subcommands: profile, sample, spectrum, localization, locallaw, diffusion,
kloops, flow, scan, fit, certify.  Exit codes: 0 success, 1 partial cell
failure, 2 configuration/argument error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .deterministic import ShapeParameters
from .ensemble import RngStream, dump_sample, sample_prbm
from .errors import PrbmlabError
from .experiments import (
    CERTIFY_COLUMNS,
    ExperimentConfig,
    KLOOP_COLUMNS,
    SCAN_RUNNERS,
    build_profile,
    fit_exponent,
    read_csv,
    run_certification,
    utc_now,
    write_csv,
    write_manifest,
)
from .flow import default_checkpoints, distributional_check, flow_params_for_target, simulate_flow, track_observables
from .kloops import verify_tree_bound
from .spectral import eigendecompose

FLOW_TS_COLUMNS = ["seed", "t", "spec_id", "residual", "normalizer"]


def _add_profile_args(p, seeded=False):
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--kind", default="power_law",
                   help="power_law | cauchy | student_t[:nu]")
    if seeded:
        p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="prbmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="build a variance profile and emit its JSON")
    _add_profile_args(p)
    p.add_argument("--out", default="")

    p = sub.add_parser("sample", help="draw one Hermitian sample")
    _add_profile_args(p, seeded=True)
    p.add_argument("--out", default="", help="binary dump path (complex64 row-major)")

    p = sub.add_parser("spectrum", help="eigenvalues of one sample as CSV")
    _add_profile_args(p, seeded=True)
    p.add_argument("--out", default="")

    p = sub.add_parser("localization", help="single-config localization cells")
    _add_profile_args(p, seeded=True)
    p.add_argument("--Ws", type=int, nargs="+", help="override W with a list")
    p.add_argument("--replicas", type=int, default=5)
    p.add_argument("--kappa", type=float, default=0.1)
    p.add_argument("--mass", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="")

    for name in ("locallaw", "diffusion"):
        p = sub.add_parser(name, help=f"{name} residual scan for one alpha")
        _add_profile_args(p, seeded=True)
        p.add_argument("--replicas", type=int, default=1)
        p.add_argument("--etas", type=float, nargs="+", required=True)
        p.add_argument("--energies", type=float, nargs="+", required=True)
        p.add_argument("--kappa", type=float, default=0.1)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default="")

    p = sub.add_parser("kloops", help="K-loop tree-bound constants (doubling flags over several N)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--kind", default="power_law")
    p.add_argument("--energy", type=float, default=0.3)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--charge", default="+-+")
    p.add_argument("--tuples", type=int, default=200)
    p.add_argument("--out", default="")

    p = sub.add_parser("flow", help="flow time series and distributional check")
    _add_profile_args(p, seeded=True)
    p.add_argument("--z-real", type=float, default=0.3)
    p.add_argument("--z-imag", type=float, default=0.2)
    p.add_argument("--replicas", type=int, default=0,
                   help="when > 0, run the two-arm distributional check")
    p.add_argument("--out", default="", help="output directory")

    p = sub.add_parser("scan", help="run a config-driven scan")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--seed", type=int, default=None, help="root_seed override")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("fit", help="exponent fit from a localization scan CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--boot", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("certify", help="propagator bound certification CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--kind", default="power_law")
    p.add_argument("--c0", type=float, default=0.1)
    p.add_argument("--out", default="")

    return parser


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _dispatch(args)
    except (PrbmlabError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    cmd = args.command
    if cmd == "profile":
        prof = build_profile(args.alpha, args.W, args.N, args.kind)
        _emit(prof.to_json(), args.out)
        return 0

    if cmd == "sample":
        prof = build_profile(args.alpha, args.W, args.N, args.kind)
        samp = sample_prbm(prof, RngStream(args.seed))
        if args.out:
            dump_sample(samp, args.out)
        herm = float(np.max(np.abs(samp.matrix - samp.matrix.conj().T)))
        print(f"sample N={samp.N} profile={samp.profile_ref} seed={args.seed} "
              f"hermitian_defect={herm}")
        return 0

    if cmd == "spectrum":
        prof = build_profile(args.alpha, args.W, args.N, args.kind)
        dec = eigendecompose(sample_prbm(prof, RngStream(args.seed)))
        rows = [dict(k=k, eigenvalue=float(v)) for k, v in enumerate(dec.eigenvalues)]
        if args.out:
            write_csv(args.out, ["k", "eigenvalue"], rows)
        else:
            for r in rows:
                print(f"{r['k']},{r['eigenvalue']}")
        return 0

    if cmd in ("localization", "locallaw", "diffusion"):
        ws = getattr(args, "Ws", None) or [args.W]
        cfg = ExperimentConfig(
            experiment_id=cmd if cmd != "localization" else "localization",
            alphas=[args.alpha],
            Ws=ws if cmd == "localization" else [args.W],
            N=args.N,
            replicas=args.replicas,
            kappa=args.kappa,
            etas=list(getattr(args, "etas", []) or []),
            energies=list(getattr(args, "energies", []) or []),
            mass=getattr(args, "mass", 0.5),
            root_seed=args.seed,
            profile_kind=args.kind,
        )
        runner, columns = SCAN_RUNNERS[cfg.experiment_id]
        rows, failures = runner(cfg, threads=args.threads)
        if args.out:
            write_csv(args.out, columns, rows)
        else:
            for r in rows[:20]:
                print(r)
        for task, msg in failures:
            print(f"cell failure {task}: {msg}", file=sys.stderr)
        return 1 if failures else 0

    if cmd == "kloops":
        rows = []
        scale_w = args.W
        for n_sys in args.N:
            prof = build_profile(args.alpha, scale_w, n_sys, args.kind)
            const = verify_tree_bound(prof, args.energy, args.t, args.charge,
                                      n_tuples=args.tuples)
            rows.append(dict(n=len(args.charge), alpha=args.alpha, t=args.t, N=n_sys,
                             constant=const, stable_flag=""))
        for prev, cur in zip(rows, rows[1:]):
            ratio = cur["constant"] / prev["constant"] if prev["constant"] else float("inf")
            cur["stable_flag"] = "stable" if ratio <= 2.0 else f"unstable:{ratio:.3g}"
        if args.out:
            write_csv(args.out, KLOOP_COLUMNS, rows)
        else:
            for r in rows:
                print(r)
        return 0

    if cmd == "flow":
        prof = build_profile(args.alpha, args.W, args.N, args.kind)
        z = complex(args.z_real, args.z_imag)
        out_dir = args.out or "."
        os.makedirs(out_dir, exist_ok=True)
        t_f, energy = flow_params_for_target(z)
        shape = ShapeParameters(prof.alpha, prof.W, prof.N)
        states = simulate_flow(prof, energy, default_checkpoints(t_f), RngStream(args.seed).child(0))
        specs = [("-+", 0, 0), ("-+", 0, prof.N // 4), ("++", 0, prof.N // 4)]
        rows = track_observables(prof, shape, states, specs, specs, seed=args.seed)
        write_csv(os.path.join(out_dir, "flow_timeseries.csv"), FLOW_TS_COLUMNS, rows)
        if args.replicas > 0:
            rep = distributional_check(prof, z, args.replicas, RngStream(args.seed).child(1))
            with open(os.path.join(out_dir, "flow_distributional.json"), "w") as fh:
                json.dump(rep, fh, indent=2, sort_keys=True)
        print(f"flow outputs written to {out_dir} (t_f={t_f:.4f}, E={energy:.4f})")
        return 0

    if cmd == "scan":
        with open(args.config) as fh:
            cfg = ExperimentConfig.from_json(fh.read())
        if args.seed is not None:
            cfg.root_seed = args.seed
        out_dir = args.out or cfg.out or "."
        os.makedirs(out_dir, exist_ok=True)
        runner, columns = SCAN_RUNNERS[cfg.experiment_id]
        started = utc_now()
        rows, failures = runner(cfg, threads=args.threads)
        csv_path = os.path.join(out_dir, f"{cfg.experiment_id}_scan.csv")
        write_csv(csv_path, columns, rows)
        write_manifest(os.path.join(out_dir, "manifest.json"), cfg, failures, started, utc_now())
        for task, msg in failures:
            print(f"cell failure {task}: {msg}", file=sys.stderr)
        print(f"wrote {csv_path} ({len(rows)} rows)")
        return 1 if failures else 0

    if cmd == "fit":
        rows = read_csv(args.input)
        fit = fit_exponent(rows, args.alpha, n_boot=args.boot, seed=args.seed)
        print(fit.to_json())
        return 0

    if cmd == "certify":
        rows, _ = run_certification(args.alpha, args.W, args.N, kind=args.kind, c0=args.c0)
        if args.out:
            write_csv(args.out, CERTIFY_COLUMNS, rows)
        else:
            for r in rows:
                print(r)
        return 0

    raise AssertionError(f"unhandled command {cmd}")  # pragma: no cover


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
