"""Command-line front end.

Subcommands: branch, stability, verify, report.  Exit codes: 0 success,
1 invalid config or missing input, 2 continuation stalled (partial output
still written), 3 at least one stability point failed, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import branch as branch_mod
from . import plots, stability
from .config import Manifest, RunConfig, load_config
from .errors import ConfigError, WavestabError

DCDS_FLOOR = 1e-3   # below this |dc/ds| the speed derivative is unusable


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH", default=None)
    parser.add_argument("--out", metavar="DIR", default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)


def _load(args) -> RunConfig:
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    return load_config(args.config, overrides)


def _outdir(cfg) -> str:
    path = cfg["output_dir"]
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# branch
# ---------------------------------------------------------------------------

def cmd_branch(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    manifest = Manifest(config=cfg.data, command="branch")
    manifest.start("total")

    control = cfg.step_control()
    policy = cfg.grid_policy()
    start = branch_mod.initial_wave(
        policy, froude=cfg.section("continuation")["start_froude"],
        control=control)
    record = branch_mod.continue_branch(start, cfg.target(), control, policy)
    if len(record) >= 5:
        record = branch_mod.branch_derivatives_and_extrema(record)

    csv_path = os.path.join(outdir, "branch.csv")
    json_path = os.path.join(outdir, "branch.json")
    with open(csv_path, "w") as fh:
        fh.write(branch_mod.branch_to_csv(record))
    with open(json_path, "w") as fh:
        fh.write(branch_mod.branch_to_json(record))
    manifest.stop("total")
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    manifest.write(os.path.join(outdir, "manifest.json"))

    for message in record.messages:
        print(f"branch: {message}")
    for ext in record.extrema:
        print(f"branch: {ext['kind']} at alpha = {ext['alpha']:.5f} "
              f"+- {ext['alpha_uncertainty']:.4f}")
    print(f"branch: {len(record)} points written to {csv_path}")
    if record.stalled:
        print("branch: continuation stalled; partial output written",
              file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

def parse_selection(expr: str, record) -> list:
    """Selection expressions: alpha=0.5, omega=0.9, index=3, window[:n]."""
    indices: list = []
    for token in expr.split(","):
        token = token.strip()
        if not token:
            continue
        if token.startswith("alpha="):
            indices.append(record.nearest(alpha=float(token[6:])))
        elif token.startswith("omega="):
            indices.append(record.nearest(omega=float(token[6:])))
        elif token.startswith("index="):
            indices.append(record.nearest(index=int(token[6:])))
        elif token == "all":
            indices.extend(range(len(record)))
        elif token.startswith("window"):
            marks = {e["kind"]: e["alpha"] for e in record.extrema}
            if "energy_max" not in marks or "speed_max" not in marks:
                raise ConfigError(
                    "window selection needs flagged energy and speed maxima")
            lo, hi = marks["energy_max"], marks["speed_max"]
            alphas = record.alphas()
            inside = [i for i in range(len(record)) if lo < alphas[i] < hi]
            if ":" in token:
                n = int(token.split(":")[1])
                if inside and n < len(inside):
                    pick = np.linspace(0, len(inside) - 1, n).round().astype(int)
                    inside = [inside[i] for i in pick]
            indices.extend(inside)
        else:
            raise ConfigError(f"cannot parse selection token {token!r}")
    seen: list = []
    for i in indices:
        if i not in seen:
            seen.append(i)
    return seen


def _speed_derivative(point) -> float | None:
    if not np.isfinite(point.dc_ds) or abs(point.dc_ds) < DCDS_FLOOR:
        return None
    return point.dE_ds / point.dc_ds


def _stability_job(payload):
    index, wave_json, dEdc, stab_cfg = payload
    record = branch_mod.branch_from_json(wave_json)
    point = record.points[0]
    wave = point.wave
    entry = {"index": index, "alpha": point.obs.alpha, "error": None,
             "growing_mode": None}
    try:
        base = stab_cfg["rate0_factor"] * wave.c / wave.grid.depth
        rates = [base * 0.5 ** j for j in range(stab_cfg["rate_levels"])]
        report = stability.spectrum_report(
            wave, rate_grid=np.geomspace(rates[-1], 10.0 * wave.c, 6),
            dEdc=dEdc, count_modes=stab_cfg["count_modes"],
            eig_modes=stab_cfg["eig_modes"])
        mode = stability.find_growing_mode(
            wave, count_modes=stab_cfg["count_modes"],
            eig_modes=stab_cfg["eig_modes"],
            n_scan=stab_cfg["scan_points"],
            rate_lo=stab_cfg["rate_lo_factor"] * wave.c,
            rate_hi=stab_cfg["rate_hi_factor"] * wave.c,
            refine_full=stab_cfg["refine_full"])
        if mode is not None:
            report.lambda_star = mode.lambda_star
            entry["growing_mode"] = mode.to_dict()
        entry["report"] = report.to_dict()
        if report.failure:
            entry["error"] = report.failure
    except WavestabError as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def _single_point_json(record, index) -> str:
    single = branch_mod.BranchRecord(points=[record.points[index]])
    return branch_mod.branch_to_json(single)


def cmd_stability(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    if not os.path.exists(args.branch):
        print(f"stability: branch file {args.branch} not found", file=sys.stderr)
        return 1
    try:
        with open(args.branch) as fh:
            record = branch_mod.branch_from_json(fh.read())
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"stability: cannot parse {args.branch}: {exc}", file=sys.stderr)
        return 1

    manifest = Manifest(config=cfg.data, command="stability")
    manifest.add_input(args.branch)
    manifest.start("total")
    try:
        indices = parse_selection(args.select, record)
    except ConfigError as exc:
        print(f"stability: {exc}", file=sys.stderr)
        return 1

    stab_cfg = cfg.section("stability")
    jobs = [(i, _single_point_json(record, i),
             _speed_derivative(record.points[i]), stab_cfg) for i in indices]
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            entries = list(pool.map(_stability_job, jobs))
    else:
        entries = [_stability_job(job) for job in jobs]

    path = os.path.join(outdir, "stability.json")
    with open(path, "w") as fh:
        json.dump({"points": entries}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    manifest.stop("total")
    manifest.add_output(path)
    manifest.write(os.path.join(outdir, "manifest.json"))

    failures = [e for e in entries if e["error"]]
    for entry in entries:
        star = (entry.get("growing_mode") or {}).get("lambda_star")
        verdict = f"unstable, rate {star:.5g}" if star else "no growing mode"
        if entry["error"]:
            verdict = f"FAILED: {entry['error']}"
        print(f"stability: alpha={entry['alpha']:.5f} -> {verdict}")
    print(f"stability: wrote {path}")
    return 3 if failures else 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from .verify import run_verification
    cfg = _load(args)
    outdir = _outdir(cfg)
    manifest = Manifest(config=cfg.data, command="verify")
    manifest.start("total")
    checks = run_verification(cfg)
    path = os.path.join(outdir, "verify.json")
    with open(path, "w") as fh:
        json.dump({"checks": [c.to_dict() for c in checks],
                   "passed": all(c.passed for c in checks)},
                  fh, sort_keys=True, indent=1)
        fh.write("\n")
    manifest.stop("total")
    manifest.add_output(path)
    manifest.write(os.path.join(outdir, "manifest.json"))
    for c in checks:
        status = "pass" if c.passed else "FAIL"
        print(f"verify: {status}  {c.name}  (value {c.value:.3e}, "
              f"tolerance {c.tolerance:.3e})")
    if not all(c.passed for c in checks):
        return 4
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _write_series(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_report(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    if args.branch is None and args.stability is None:
        print("report: need --branch and/or --stability inputs", file=sys.stderr)
        return 1
    manifest = Manifest(config=cfg.data, command="report")
    manifest.start("total")

    series: dict = {}
    extrema: list = []
    if args.branch is not None:
        if not os.path.exists(args.branch):
            print(f"report: missing {args.branch}", file=sys.stderr)
            return 1
        with open(args.branch) as fh:
            record = branch_mod.branch_from_json(fh.read())
        manifest.add_input(args.branch)
        alphas = record.alphas()
        extrema = record.extrema
        for key in ("c", "energy", "omega"):
            series[key] = list(zip(alphas.tolist(),
                                   record.column(key).tolist()))

    growth: list = []
    drift: dict = {}
    if args.stability is not None:
        if not os.path.exists(args.stability):
            print(f"report: missing {args.stability}", file=sys.stderr)
            return 1
        with open(args.stability) as fh:
            stab = json.load(fh)
        manifest.add_input(args.stability)
        for entry in stab["points"]:
            mode = entry.get("growing_mode")
            if mode:
                growth.append((entry["alpha"], mode["lambda_star"]))
            report = entry.get("report") or {}
            samples = report.get("k_rate_samples") or []
            if samples:
                drift[f"alpha={entry['alpha']:.4f}"] = samples
        growth.sort()

    written = []
    for key, fname in (("c", "series_speed.csv"),
                       ("energy", "series_energy.csv"),
                       ("omega", "series_omega.csv")):
        if key in series:
            path = os.path.join(outdir, fname)
            _write_series(path, ("alpha", key), series[key])
            written.append(path)
    path = os.path.join(outdir, "series_growth_rate.csv")
    _write_series(path, ("alpha", "lambda_star"), growth)
    written.append(path)
    rows = [(float(label.split("=")[1]), r, k)
            for label, samples in drift.items() for r, k in samples]
    path = os.path.join(outdir, "series_kernel_drift.csv")
    _write_series(path, ("alpha", "rate", "k_rate"), rows)
    written.append(path)

    if not args.no_figures:
        written += plots.render_branch_figures(series, extrema, outdir)
        written += plots.render_stability_figures(growth, drift, outdir)
        if args.stability is not None:
            for entry in stab["points"]:
                if entry.get("growing_mode"):
                    written += plots.render_mode_figure(
                        entry["growing_mode"], entry["alpha"], outdir)

    manifest.stop("total")
    for path in written:
        manifest.add_output(path)
    manifest.write(os.path.join(outdir, "manifest.json"))
    for path in written:
        print(f"report: wrote {path}")
    return 0


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavestab",
        description="Solitary water-wave branch continuation and "
                    "linear-stability laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_branch = sub.add_parser("branch", help="continue the solitary-wave branch")
    _add_common(p_branch)
    p_branch.set_defaults(func=cmd_branch)

    p_stab = sub.add_parser("stability", help="spectral analysis of branch points")
    _add_common(p_stab)
    p_stab.add_argument("--branch", metavar="PATH", required=True,
                        help="branch.json produced by the branch command")
    p_stab.add_argument("--select", metavar="EXPR", default="all",
                        help="alpha=x | omega=x | index=i | window[:n] | all")
    p_stab.set_defaults(func=cmd_stability)

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="emit plot-ready series and figures")
    _add_common(p_report)
    p_report.add_argument("--branch", metavar="PATH", default=None)
    p_report.add_argument("--stability", metavar="PATH", default=None)
    p_report.add_argument("--no-figures", action="store_true")
    p_report.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
