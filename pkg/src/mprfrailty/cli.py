"""Command-line front end.

Subcommands: fit, compare, simulate, hr, frailties.  Machine artifacts
are JSON, tabular outputs are CSV, and human-readable tables go to
stdout and a .txt file.  Exit codes partition failure modes so the tool
is scriptable:

    0  success
    1  user/input error (bad CSV, unknown covariate, bad flags)
    2  fit completed but did not converge (partial outputs written)
    3  numerical failure (lost curvature, diverged solver)
    4  simulation scenario or censoring calibration failure
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .data import STRUCTURES, Dataset
from .errors import (
    CalibrationError,
    DataError,
    DomainError,
    MPRFrailtyError,
    ScenarioError,
)
from .fitting import FitSettings, ModelFit, fit
from .inference import bootstrap_hr_ci, frailty_estimates, hazard_ratio_curve
from .selection import frailty_lrt, selection_report
from .simulation import ScenarioSpec, run_scenario

EXIT_OK = 0
EXIT_USER = 1
EXIT_NOCONV = 2
EXIT_NUMERIC = 3
EXIT_SCENARIO = 4


def _sanitize(obj):
    """Replace non-finite floats with None so the JSON stays strict."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_sanitize(payload), fh, indent=2)
        fh.write("\n")


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "NA"
    return f"{v:.10g}"


def _split_list(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else None


def _parse_times(text):
    """Either comma-separated values or start:stop:count."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise DomainError("times must be 'start:stop:count' or a comma list")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 2 or start <= 0 or stop <= start:
            raise DomainError("bad time grid specification")
        return np.linspace(start, stop, count)
    vals = np.asarray([float(v) for v in text.split(",") if v.strip()])
    if vals.size == 0:
        raise DomainError("empty time grid")
    return vals


def fit_table_text(model_fit):
    """Human-readable coefficient table mirroring the report layout."""
    lines = []
    lines.append(f"family: {model_fit.family}  structure: {model_fit.structure}")
    lines.append(f"converged: {model_fit.converged}  "
                 f"outer iterations: {model_fit.iterations.get('outer')}")
    lines.append("")
    lines.append("Scale")
    for block, name, est, se in model_fit.coefficients():
        if block == "scale":
            lines.append(f"  {name:<20} {est:>10.4f} ({se:.4f})")
    lines.append("Shape")
    for block, name, est, se in model_fit.coefficients():
        if block == "shape":
            lines.append(f"  {name:<20} {est:>10.4f} ({se:.4f})")
    lines.append("Frailty parameters")
    if not model_fit.dispersion:
        lines.append("  (none)")
    for name, val in model_fit.dispersion.items():
        se = model_fit.se_dispersion.get(name, float("nan"))
        se_text = "NA" if not math.isfinite(se) else f"{se:.4f}"
        lines.append(f"  {name:<20} {val:>10.4f} ({se_text})")
    if model_fit.dispersion:
        lines.append(
            "  note: do not use these standard errors to test a variance "
            "against zero; use the boundary-corrected likelihood-ratio test"
        )
    lines.append("")
    lines.append(f"-2 p(h):  {model_fit.deviance_profile:.2f}")
    lines.append(f"-2 l_c:   {model_fit.cond_deviance:.2f}")
    lines.append(f"df_r: {model_fit.df_r}    df_c: {model_fit.df_c:.2f}")
    lines.append(f"rAIC: {model_fit.raic:.2f}  cAIC: {model_fit.caic:.2f}")
    for w in model_fit.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def _load_fit(path):
    with open(path) as fh:
        return ModelFit.from_dict(json.load(fh))


def _settings_from_args(args):
    kwargs = {}
    if getattr(args, "max_outer", None):
        kwargs["max_outer"] = args.max_outer
    return FitSettings(**kwargs) if kwargs else None


def cmd_fit(args):
    try:
        dataset = Dataset.read_csv(args.data)
        model_fit = fit(
            dataset,
            structure=args.structure,
            family=args.family,
            scale_covariates=_split_list(args.scale_covariates),
            shape_covariates=_split_list(args.shape_covariates),
            settings=_settings_from_args(args),
        )
    except (DataError, DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except MPRFrailtyError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"fit_{model_fit.structure}")
    _write_json(stem + ".json", model_fit.to_dict())
    table = fit_table_text(model_fit)
    with open(stem + ".txt", "w") as fh:
        fh.write(table)
    print(table, end="")
    print(f"wrote {stem}.json")
    return EXIT_OK if model_fit.converged else EXIT_NOCONV


def cmd_compare(args):
    structures = _split_list(args.structures) or list(STRUCTURES)
    if len(structures) < 2:
        print("error: compare needs at least 2 structures", file=sys.stderr)
        return EXIT_USER
    try:
        dataset = Dataset.read_csv(args.data)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER

    fits, failures = {}, {}
    for structure in structures:
        try:
            fits[structure] = fit(
                dataset,
                structure=structure,
                family=args.family,
                scale_covariates=_split_list(args.scale_covariates),
                shape_covariates=_split_list(args.shape_covariates),
                settings=_settings_from_args(args),
            )
        except (MPRFrailtyError, ValueError) as exc:
            failures[structure] = f"{type(exc).__name__}: {exc}"
    if not fits:
        print("error: every requested structure failed", file=sys.stderr)
        for structure, reason in failures.items():
            print(f"  {structure}: {reason}", file=sys.stderr)
        return EXIT_NUMERIC

    report = selection_report(list(fits.values()), failures)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "selection.csv")
    with open(csv_path, "w") as fh:
        for row in report.to_csv_rows():
            fh.write(",".join(str(c) for c in row) + "\n")
    text = report.to_text()
    lrt_lines = []
    if "NF" in fits:
        for alt in ("ScF", "ShF"):
            if alt in fits:
                try:
                    res = frailty_lrt(fits["NF"], fits[alt])
                except MPRFrailtyError as exc:
                    lrt_lines.append(f"LRT NF vs {alt}: failed ({exc})")
                    continue
                verdict = "significant" if res.significant else "not significant"
                lrt_lines.append(
                    f"LRT NF vs {alt}: statistic {res.statistic:.3f} vs "
                    f"{res.critical_value:.2f} -> {verdict}"
                )
    if lrt_lines:
        text += "\n" + "\n".join(lrt_lines)
    with open(os.path.join(args.out, "selection.txt"), "w") as fh:
        fh.write(text + "\n")
    for structure, f in fits.items():
        _write_json(os.path.join(args.out, f"fit_{structure}.json"), f.to_dict())
    print(text)
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_simulate(args):
    try:
        scenario = ScenarioSpec.read_json(args.scenario)
        if args.replicates:
            scenario = ScenarioSpec.from_dict(
                {**scenario.to_dict(), "replicates": args.replicates}
            )
        if args.seed is not None:
            scenario = ScenarioSpec.from_dict(
                {**scenario.to_dict(), "seed": args.seed}
            )
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: bad scenario file: {exc}", file=sys.stderr)
        return EXIT_USER
    try:
        summary = run_scenario(
            scenario, structure=args.structure, threads=args.threads
        )
    except (CalibrationError, ScenarioError) as exc:
        print(f"scenario failure: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "scenario_summary.csv")
    with open(path, "w") as fh:
        fh.write(summary.to_csv_text())
    print(
        f"replicates converged: {summary.n_converged}  "
        f"failed: {summary.n_failed}  c_max: {summary.c_max:.6g}"
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_hr(args):
    try:
        model_fit = _load_fit(args.fit)
        times = _parse_times(args.times)
        if args.boot:
            curve = bootstrap_hr_ci(
                model_fit, args.covariate, times,
                n_boot=args.boot, seed=args.seed or 0, threads=args.threads,
            )
        else:
            curve = hazard_ratio_curve(model_fit, args.covariate, times)
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except MPRFrailtyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"hr_{args.covariate}")
    with open(stem + ".csv", "w") as fh:
        fh.write("time,hr,lower,upper\n")
        for t, hr, lo, hi in curve.to_rows():
            fh.write(f"{_fmt(t)},{_fmt(hr)},{_fmt(lo)},{_fmt(hi)}\n")
    _write_json(
        stem + ".json",
        {
            "covariate": curve.covariate,
            "reference_covariates": curve.reference_covariates,
            "times": list(map(float, curve.times)),
            "hr": list(map(float, curve.hr)),
            "lower": None if curve.lower is None else list(map(float, curve.lower)),
            "upper": None if curve.upper is None else list(map(float, curve.upper)),
        },
    )
    print(f"wrote {stem}.csv")
    return EXIT_OK


def cmd_frailties(args):
    try:
        model_fit = _load_fit(args.fit)
        intervals = frailty_estimates(model_fit, args.component)
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except MPRFrailtyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"frailties_{args.component}")
    with open(stem + ".csv", "w") as fh:
        fh.write("cluster,size,estimate,lower,upper\n")
        for iv in intervals:
            fh.write(
                f"{iv.cluster},{iv.cluster_size},{_fmt(iv.estimate)},"
                f"{_fmt(iv.lower)},{_fmt(iv.upper)}\n"
            )
    _write_json(
        stem + ".json",
        [
            {
                "cluster": str(iv.cluster),
                "size": iv.cluster_size,
                "estimate": iv.estimate,
                "lower": iv.lower,
                "upper": iv.upper,
                "u": iv.u,
            }
            for iv in intervals
        ],
    )
    print(f"wrote {stem}.csv")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mprfrailty",
        description="Survival regression with covariate-dependent scale and "
        "shape plus cluster frailties in both, fitted by hierarchical "
        "likelihood.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_fit_flags(p):
        p.add_argument("--data", required=True, help="input CSV "
                       "(cluster,time,status,<covariates...>)")
        p.add_argument("--family", default="weibull",
                       choices=["weibull", "gompertz", "loglogistic"])
        p.add_argument("--scale-covariates", default=None,
                       help="comma list (default: all covariates)")
        p.add_argument("--shape-covariates", default=None,
                       help="comma list (default: all covariates)")
        p.add_argument("--max-outer", type=int, default=None)
        p.add_argument("--out", default=".", help="output directory")

    p_fit = sub.add_parser("fit", help="fit one frailty structure")
    add_common_fit_flags(p_fit)
    p_fit.add_argument("--structure", default="BVNF", choices=list(STRUCTURES))
    p_fit.set_defaults(func=cmd_fit)

    p_cmp = sub.add_parser("compare", help="fit and rank several structures")
    add_common_fit_flags(p_cmp)
    p_cmp.add_argument("--structures", default=None,
                       help="comma list (default: all six)")
    p_cmp.set_defaults(func=cmd_compare)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON file")
    p_sim.add_argument("--structure", default="BVNF", choices=list(STRUCTURES))
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=os.cpu_count())
    p_sim.add_argument("--out", default=".")
    p_sim.set_defaults(func=cmd_simulate)

    p_hr = sub.add_parser("hr", help="hazard-ratio curve from a saved fit")
    p_hr.add_argument("--fit", required=True, help="fit JSON from `fit`")
    p_hr.add_argument("--covariate", required=True)
    p_hr.add_argument("--times", default="0.05:5:60",
                      help="'start:stop:count' or comma list")
    p_hr.add_argument("--boot", type=int, default=0,
                      help="bootstrap replicates for bands (0 = none)")
    p_hr.add_argument("--seed", type=int, default=0)
    p_hr.add_argument("--threads", type=int, default=os.cpu_count())
    p_hr.add_argument("--out", default=".")
    p_hr.set_defaults(func=cmd_hr)

    p_fr = sub.add_parser("frailties", help="per-cluster effects from a saved fit")
    p_fr.add_argument("--fit", required=True)
    p_fr.add_argument("--component", required=True, choices=["scale", "shape"])
    p_fr.add_argument("--out", default=".")
    p_fr.set_defaults(func=cmd_frailties)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
