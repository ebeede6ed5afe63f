"""Command line entry point: ``thermfront run | analyze | selftest | template``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import defaultdict
from dataclasses import asdict

import numpy as np

from . import __version__
from .analysis import (AnalysisReport, check_avalanche, collapse_check, detect_threshold_time,
                       estimate_w_star, fit_alpha, fit_log_slope, robustness_from_slope,
                       verify_report)
from .config import TEMPLATE, load_spec, default_spec, resolve_output_dir
from .ensemble import BACKENDS, load_ensemble, run_ensemble, save_ensemble
from .errors import ConfigError, FitFailure, InvalidArgument, ThermfrontError

log = logging.getLogger("thermfront")

MANIFEST = "manifest.json"


def _write_json(path, data):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _load_manifest(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        return None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"corrupt manifest {path}: {exc}") from exc


def cmd_run(spec, output_dir, workers=1, resume=False):
    """Run every sweep point and record the outputs in ``manifest.json``."""
    os.makedirs(output_dir, exist_ok=True)
    if not os.access(output_dir, os.W_OK):
        raise ConfigError(f"output directory {output_dir} is not writable")
    mpath = os.path.join(output_dir, MANIFEST)
    previous = {}
    if resume:
        old = _load_manifest(mpath) or {}
        for entry in old.get("points", []):
            files = [os.path.join(output_dir, f) for f in entry["files"].values()]
            if all(os.path.exists(f) for f in files):
                previous[entry["config_hash"]] = entry
    # validate resources for every point before spending time on any
    for pt in spec.points:
        if pt.ensemble.backend == "oracle":
            from .lindblad_oracle import oracle_basis_check

            oracle_basis_check(pt.chain)
    manifest = {
        "code_version": __version__,
        "master_seed": spec.ensemble["master_seed"],
        "backend": spec.ensemble["backend"],
        "analysis": spec.analysis,
        "points": [],
    }
    from .ensemble import config_hash

    for pt in spec.points:
        h = config_hash(pt.chain, pt.ensemble)
        if h in previous:
            log.info("resume: %s already done", pt.label)
            manifest["points"].append(previous[h])
            continue
        log.info("running %s (%s, N_r=%d)", pt.label, pt.ensemble.backend, pt.ensemble.N_r)
        series = run_ensemble(pt.chain, pt.ensemble, workers=workers)
        paths = save_ensemble(series, output_dir, prefix=pt.label)
        manifest["points"].append({
            "label": pt.label,
            "config_hash": h,
            "master_seed": pt.ensemble.master_seed,
            "code_version": __version__,
            "chain": asdict(pt.chain),
            "ensemble": {k: v for k, v in asdict(pt.ensemble).items() if k != "keep_store"},
            "files": {k: os.path.basename(v) for k, v in paths.items()},
            "n_used": series.n_used,
            "excluded": len(series.excluded),
        })
        _write_json(mpath, manifest)
    _write_json(mpath, manifest)
    return mpath


def _group_key(chain, *drop):
    return tuple((k, v) for k, v in sorted(chain.items()) if k not in drop)


def cmd_analyze(manifest_path, r_th=None, window=None, n_sigma=None, force=False, out_dir=None):
    """Thresholds, slopes, alpha, W*, robustness and collapse for a finished run."""
    manifest = _load_manifest(manifest_path)
    if manifest is None:
        raise ConfigError(f"manifest not found: {manifest_path}")
    base = os.path.dirname(os.path.abspath(manifest_path))
    out_dir = out_dir or base
    settings = manifest.get("analysis", {})
    r_th = settings.get("r_th", 0.17) if r_th is None else r_th
    n_sigma = settings.get("n_sigma", 1.0) if n_sigma is None else n_sigma
    resample = settings.get("resample_per_decade", 20) or None
    versions = {p.get("code_version") for p in manifest["points"]} | {manifest.get("code_version")}
    if len(versions) > 1 and not force:
        raise ConfigError(f"manifest mixes code versions {sorted(map(str, versions))}; use --force")

    report = AnalysisReport()
    loaded = []
    for entry in manifest["points"]:
        meta = os.path.join(base, entry["files"]["metadata"])
        if not os.path.exists(meta):
            msg = f"missing sweep point {entry['label']}"
            log.warning(msg)
            report.failures.append(msg)
            continue
        loaded.append((entry, load_ensemble(meta)))

    slopes = {}
    alpha_groups = defaultdict(list)
    for entry, ens in loaded:
        chain = entry["chain"]
        imb, front = ens.imbalance, ens.front
        thr = detect_threshold_time(imb.times, imb.Ir, imb.Ir_err, r_th, n_sigma)
        report.thresholds.append({"label": entry["label"], **chain, **asdict(thr)})
        alpha_groups[_group_key(chain, "L", "W")].append((chain["L"], chain["W"], thr.t_tilde))
        t_final = entry["ensemble"]["t_final"]
        lo, hi = window if window else settings.get("fit_window", [10.0, 0.0])
        win = (float(lo), float(hi) if hi else float(t_final))
        try:
            fit = fit_log_slope(front.times, front.h, front.h_err, win, resample=resample)
        except (FitFailure, InvalidArgument) as exc:
            report.failures.append(f"slope {entry['label']}: {exc}")
            continue
        slopes[entry["label"]] = (chain, fit)
        report.slopes.append({"label": entry["label"], **chain, **asdict(fit),
                              "one_over_A": fit.one_over_A})

    alphas = {}
    report_alpha = []
    for key, pts in alpha_groups.items():
        try:
            af = fit_alpha(pts)
        except FitFailure as exc:
            report.failures.append(f"alpha {dict(key)}: {exc}")
            continue
        alphas[key] = af
        report_alpha.append({"group": dict(key), "alpha": af.alpha, "beta": af.beta,
                             "alpha_err": af.alpha_err, "beta_err": af.beta_err,
                             "W_tilde": af.W_tilde, "points": [list(p) for p in af.points]})
    if report_alpha:
        report.alpha = report_alpha[0] if len(report_alpha) == 1 else {"groups": report_alpha}

    wgroups = defaultdict(list)
    for label, (chain, fit) in slopes.items():
        wgroups[_group_key(chain, "W")].append((chain["W"], fit.one_over_A if fit.A > 0 else np.inf))
    w_star = {}
    for key, vals in wgroups.items():
        vals.sort()
        Ws = [w for w, _ in vals]
        inv = [v for _, v in vals]
        ws = estimate_w_star(Ws, inv)
        name = ",".join(f"{k}={v}" for k, v in key)
        report.w_star[name] = {"W": Ws, "one_over_A": inv, "W_star": ws}
        w_star[key] = ws

    for label, (chain, fit) in slopes.items():
        if fit.A <= 0:
            report.failures.append(f"robustness {label}: slope A={fit.A:.4g} is not positive")
            continue
        af = alphas.get(_group_key(chain, "L", "W"))
        rep = robustness_from_slope(fit.A, None if af is None else af.alpha,
                                    W_star=w_star.get(_group_key(chain, "W")))
        report.robustness.append({"label": label, **asdict(rep),
                                  "avalanche": asdict(check_avalanche(rep.kappa, 0, 0, 1))})

    cgroups = defaultdict(dict)
    for entry, ens in loaded:
        chain = entry["chain"]
        cgroups[_group_key(chain, "L")][chain["L"]] = (ens.imbalance.times, ens.imbalance.Ir,
                                                      ens.imbalance.Ir_err)
    for key, curves in cgroups.items():
        if len(curves) < 2:
            continue
        t_final = max(c[0][-1] for c in curves.values())
        lo, hi = window if window else settings.get("fit_window", [10.0, 0.0])
        try:
            dev = collapse_check(curves, (float(lo), float(hi) if hi else float(t_final)))
        except InvalidArgument as exc:
            report.failures.append(f"collapse {dict(key)}: {exc}")
            continue
        report.collapse.append({"group": dict(key), "sizes": sorted(curves),
                                "max_deviation_sigma": dev})

    os.makedirs(out_dir, exist_ok=True)
    rpath = os.path.join(out_dir, "report.json")
    with open(rpath, "w") as fh:
        fh.write(report.to_json())
    _write_tables(out_dir, report, loaded)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summarize(report))
    for msg in report.failures:
        log.warning(msg)
    return rpath, report


def _write_tables(out_dir, report, loaded):
    with open(os.path.join(out_dir, "thresholds.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "W", "Delta", "gamma", "gamma1", "LW", "t_tilde", "r_th"])
        for t in report.thresholds:
            w.writerow([t["L"], t["W"], t["Delta"], t["gamma"], t["gamma1"], t["L"] * t["W"],
                        "nan" if t["t_tilde"] is None else repr(t["t_tilde"]), t["r_th"]])
    with open(os.path.join(out_dir, "slopes.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "W", "Delta", "gamma", "gamma1", "A", "A_err", "one_over_A", "r2"])
        for s in report.slopes:
            w.writerow([s["L"], s["W"], s["Delta"], s["gamma"], s["gamma1"], repr(s["A"]),
                        repr(s["A_err"]), repr(s["one_over_A"]), repr(s["r2"])])
    with open(os.path.join(out_dir, "collapse.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "W", "Delta", "gamma", "gamma1", "t", "L_Ir", "L_Ir_err"])
        for entry, ens in loaded:
            c = entry["chain"]
            for t, ir, e in zip(ens.imbalance.times, ens.imbalance.Ir, ens.imbalance.Ir_err):
                w.writerow([c["L"], c["W"], c["Delta"], c["gamma"], c["gamma1"], repr(float(t)),
                            repr(float(c["L"] * ir)), repr(float(c["L"] * e))])


def summarize(report) -> str:
    lines = [f"thermfront {__version__} analysis", ""]
    lines.append("threshold times (r_th, rule):")
    for t in report.thresholds:
        tt = "none" if t["t_tilde"] is None else f"{t['t_tilde']:.4g}"
        lines.append(f"  {t['label']:<32} t~ = {tt}  ({t['r_th']}, {t['crossing_rule']})")
    lines.append("")
    lines.append("log slopes of h(t):")
    for s in report.slopes:
        lines.append(f"  {s['label']:<32} A = {s['A']:.4f} +- {s['A_err']:.4f}  "
                     f"1/A = {s['one_over_A']:.3f}  R2 = {s['r2']:.3f}")
    if report.alpha:
        groups = report.alpha.get("groups", [report.alpha])
        for a in groups:
            lines.append(f"\nalpha = {a['alpha']:.5f} +- {a['alpha_err']:.5f}, beta = {a['beta']:.4f}, "
                         f"W~ = {a['W_tilde']:.3f}")
    lines.append("")
    lines.append(f"robustness (1/A vs 2 ln 4 = {report.constants['two_ln4']:.4f}):")
    for r in report.robustness:
        lines.append(f"  {r['label']:<32} {r['verdict']:<12} margin {r['log_margin']:+.4f}  "
                     f"kappa {r['kappa']:.4g}")
    for name, ws in report.w_star.items():
        lines.append(f"  W* [{name}] = {ws['W_star']}")
    for c in report.collapse:
        lines.append(f"collapse {c['group']} sizes {c['sizes']}: "
                     f"max deviation {c['max_deviation_sigma']:.3f} sigma")
    if report.failures:
        lines.append("\nwarnings:")
        lines.extend(f"  {m}" for m in report.failures)
    return "\n".join(lines) + "\n"


def _build_parser():
    p = argparse.ArgumentParser(prog="thermfront",
                                description="Boundary-noise thermalization fronts in disordered XXZ chains")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the ensembles of an experiment file")
    run.add_argument("--config", help="TOML experiment file (defaults when omitted)")
    run.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--output-dir")
    run.add_argument("--backend", choices=BACKENDS)
    run.add_argument("--resume", action="store_true", help="skip points already in the manifest")

    an = sub.add_parser("analyze", help="fit and judge the results of a run")
    an.add_argument("manifest", nargs="?", help="manifest.json (default: <output-dir>/manifest.json)")
    an.add_argument("--config", help="take output dir and analysis settings from this file")
    an.add_argument("--output-dir")
    an.add_argument("--r-th", type=float)
    an.add_argument("--n-sigma", type=float)
    an.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"))
    an.add_argument("--force", action="store_true", help="accept mixed code versions")
    an.add_argument("--verify", metavar="REPORT", help="recompute verdicts stored in REPORT")

    st = sub.add_parser("selftest", help="fast invariant and cross-check suite")
    st.add_argument("--inject", choices=("kick-variance", "backend-mismatch"),
                    help="deliberately break one check (to confirm it can fail)")
    st.add_argument("--workers", type=int, default=2)

    sub.add_parser("template", help="print a documented experiment file")
    return p


def _apply_overrides(spec, args):
    changed = False
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        spec.ensemble["master_seed"] = args.seed
        changed = True
    if args.backend:
        spec.ensemble["backend"] = args.backend
        changed = True
    if changed:
        spec.points = spec.expand()
    return spec


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "template":
            sys.stdout.write(TEMPLATE)
            return 0
        if args.command == "run":
            spec = load_spec(args.config) if args.config else default_spec()
            spec = _apply_overrides(spec, args)
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            out = resolve_output_dir(spec, args.output_dir)
            path = cmd_run(spec, out, workers=args.workers, resume=args.resume)
            print(path)
            return 0
        if args.command == "analyze":
            if args.verify:
                with open(args.verify) as fh:
                    bad = verify_report(json.load(fh))
                for msg in bad:
                    print(f"MISMATCH {msg}")
                print("verify: ok" if not bad else f"verify: {len(bad)} mismatches")
                return 0 if not bad else FitFailure.exit_code
            manifest = args.manifest
            if manifest is None:
                spec = load_spec(args.config) if args.config else default_spec()
                manifest = os.path.join(resolve_output_dir(spec, args.output_dir), MANIFEST)
            rpath, report = cmd_analyze(manifest, r_th=args.r_th, window=args.window,
                                        n_sigma=args.n_sigma, force=args.force,
                                        out_dir=args.output_dir if args.manifest else None)
            sys.stdout.write(summarize(report))
            print(rpath)
            return 0
        if args.command == "selftest":
            from .selftest import run_selftest

            ok = run_selftest(inject=args.inject, workers=args.workers)
            return 0 if ok else 1
    except ThermfrontError as exc:
        print(f"thermfront: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 2


if __name__ == "__main__":
    sys.exit(main())
