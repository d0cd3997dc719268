"""Command-line experiment runner.

Subcommands:
  check         precondition gate: existence conditions, moment conditions,
                kernel summability, block-exponent window
  simulate      write innovation/elementary panels and aggregate paths
  validate      run one of the experiments: clt | slln | probes
  estimate-chi  empirical interaction kernel against its theoretical values

Common flags: --config PATH (required), --seed, --threads, --out, --force,
--format {csv,json}.  DSAGG_THREADS sets the default thread budget.  Exit
codes: 0 ok, 1 runtime error, 2 hypothesis-check failure.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import aggregation as agg
from . import environment as env
from . import processes as proc
from . import reporting as rep
from . import validation as val
from .config import ConfigError, load_config
from .errors import ConfigurationError
from .innovations import estimate_chi, generate_panel, theoretical_chi
from .seeding import child_seed

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_HYPOTHESIS = 2


def _parser():
    p = argparse.ArgumentParser(prog="dsagg", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="path to the JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--threads", type=int, default=None, help="thread budget")
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument("--format", choices=("csv", "json"), default=None,
                        help="restrict report formats to one of csv/json")
        sp.add_argument("--force", action="store_true",
                        help="run even when hypothesis checks fail (reports are annotated)")

    common(sub.add_parser("check", help="run every precondition checker"))
    common(sub.add_parser("simulate", help="write panels and aggregate paths"))
    vp = sub.add_parser("validate", help="run a validation experiment")
    common(vp)
    vp.add_argument("--which", choices=("clt", "slln", "probes"), required=True)
    common(sub.add_parser("estimate-chi", help="empirical interaction kernel"))
    return p


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = max(args.threads, 1)
    if args.out is not None:
        cfg.output_dir = args.out
    if args.format is not None:
        cfg.formats = (args.format,)
    return cfg


def _emit_resolved(cfg, outdir):
    tree = cfg.resolved_tree()
    tree["seed"] = cfg.seed
    tree["threads"] = cfg.threads
    tree["output"] = {"dir": cfg.output_dir, "formats": list(cfg.formats),
                      "figures": cfg.figures}
    return rep.write_json(os.path.join(outdir, "resolved_config.json"), tree)


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def run_checks(cfg):
    """All gate checks; returns (payload, hard_fail, failing names)."""
    model = cfg.model
    vcfg = cfg.validation
    mc = int(vcfg["mc_samples"])
    seed = cfg.seed
    failing = []

    existence = env.check_existence(model, cfg.environment, mc_samples=mc,
                                    seed=child_seed(seed, "check.existence"))
    if existence.verdict == "fail":
        failing.extend(existence.failing_ids())

    # the moment and dependence-control checkers evaluate the expansion, which
    # only exists when the existence conditions hold
    moment = None
    k5_est = k5_se = None
    if existence.verdict != "fail":
        moment = env.check_moment_k2delta(model, cfg.environment, cfg.innovations,
                                          delta=float(vcfg["delta"]),
                                          mc_samples=min(mc, 200_000),
                                          seed=child_seed(seed, "check.moment"))
        if moment.verdict == "fail":
            failing.append("moment.stability")
        k5_est, k5_se = env.check_k5(model, cfg.environment, mc_samples=mc,
                                     seed=child_seed(seed, "check.k5"))

    kernel = theoretical_chi(cfg.innovations)
    if not kernel.summable:
        failing.append("kernel.summability")

    window = val.clt_exponent_window(float(vcfg["delta"]), cfg.decay_exponent(),
                                     family=vcfg["family"])
    if not window.feasible:
        failing.append("block.exponent-window")

    payload = {
        "verdict": "fail" if failing else "pass",
        "failing": failing,
        "existence": existence.to_json(),
        "moment": None if moment is None else {
            "delta": moment.delta, "estimate": moment.estimate,
            "stderr": moment.stderr, "heavy_tailed": moment.heavy_tailed,
            "curve": moment.curve},
        "dependence_moment": {"estimate": k5_est, "stderr": k5_se},
        "kernel": {"summable": kernel.summable, "l1_norm": kernel.l1_norm,
                   "support": kernel.support, "note": kernel.note,
                   "s": {str(k): v for k, v in sorted(kernel.s.items())}},
        "exponent_window": {
            "family": window.family, "feasible": window.feasible,
            "threshold": window.threshold,
            "decay": None if math.isinf(window.decay) else window.decay,
            "alpha_max": window.alpha_max, "alpha": window.alpha, "beta": window.beta,
        },
    }
    return payload, bool(failing), failing


def cmd_check(cfg, args):
    outdir = cfg.output_dir
    payload, hard_fail, failing = run_checks(cfg)
    _emit_resolved(cfg, outdir)
    if "json" in cfg.formats:
        rep.write_json(os.path.join(outdir, "check_report.json"), payload)
    if "csv" in cfg.formats:
        rows = [(c["condition_id"], c["verdict"], c["estimate"], c["stderr"],
                 c["violation_fraction"]) for c in payload["existence"]["conditions"]]
        if payload["moment"] is not None:
            rows.append(("moment.stability",
                         "fail" if payload["moment"]["heavy_tailed"] else "pass",
                         payload["moment"]["estimate"], payload["moment"]["stderr"], 0.0))
        rows.append(("kernel.summability", "pass" if payload["kernel"]["summable"] else "fail",
                     payload["kernel"]["l1_norm"], 0.0, 0.0))
        rows.append(("block.exponent-window",
                     "pass" if payload["exponent_window"]["feasible"] else "fail",
                     payload["exponent_window"]["threshold"], 0.0, 0.0))
        rep.write_csv(os.path.join(outdir, "check_report.csv"),
                      ["condition_id", "verdict", "estimate", "stderr", "violation_fraction"],
                      rows)
    for line in _check_lines(payload):
        print(line)
    return EXIT_HYPOTHESIS if hard_fail else EXIT_OK


def _check_lines(payload):
    lines = []
    for c in payload["existence"]["conditions"]:
        lines.append(f"[{c['verdict']:>4}] {c['condition_id']}")
    if payload["moment"] is None:
        lines.append("[skip] moment.stability (existence failed)")
    else:
        lines.append(f"[{'fail' if payload['moment']['heavy_tailed'] else 'pass':>4}] "
                     f"moment.stability (estimate {payload['moment']['estimate']:.6g})")
    lines.append(f"[{'pass' if payload['kernel']['summable'] else 'fail':>4}] kernel.summability")
    lines.append(f"[{'pass' if payload['exponent_window']['feasible'] else 'fail':>4}] "
                 "block.exponent-window")
    lines.append(f"overall: {payload['verdict']}")
    return lines


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg, args):
    outdir = cfg.output_dir
    _emit_resolved(cfg, outdir)
    model = cfg.model
    margin = model.lag_window
    noncausal = model.tag in ("linear", "dsv_star", "dsulbs")
    t_len = cfg.t_len
    for n in cfg.n_grid:
        draw = env.sample_environment(cfg.environment, n,
                                      seed=child_seed(cfg.seed, "simulate.env", n))
        t_start = 1 - margin
        span = t_len + margin + (margin if noncausal else 0)
        panel = generate_panel(cfg.innovations, n, span,
                               seed=child_seed(cfg.seed, "simulate.panel", n),
                               t_start=t_start)
        t_range = range(1, t_len + 1)
        elem = proc.build_elementary_panel(model, draw, panel, t_range, method=_method(model))
        path = agg.aggregate(elem, normalization=cfg.normalization)
        tag = f"n{n}"
        rep.write_matrix_csv(os.path.join(outdir, f"innovations_{tag}.csv"),
                             panel.values, col_labels=[f"t{t}" for t in
                                                       range(t_start, t_start + span)])
        rep.write_matrix_csv(os.path.join(outdir, f"elementary_{tag}.csv"),
                             elem.values, col_labels=[f"t{t}" for t in t_range])
        rep.write_csv(os.path.join(outdir, f"aggregate_{tag}.csv"), ["t", "x"],
                      list(zip(t_range, path.x)))
        rep.write_json(os.path.join(outdir, f"panel_{tag}.json"), {
            "n": n, "t_len": t_len, "t_start": t_start,
            "seed": cfg.seed, "normalization": path.normalization,
            "model": model.tag, "method": elem.method, "centered": elem.centered,
            "innovations": cfg.tree["innovations"], "environment": cfg.tree["environment"],
        })
        if model.tag != "dsulbs":
            coeffs = proc.volterra_coefficients(model, draw.values[0])
            rep.write_chaos_coefficients(
                os.path.join(outdir, f"coefficients_{tag}_i1.csv"),
                os.path.join(outdir, f"coefficients_{tag}_i1.json"),
                coeffs, model.tag, draw.values[0])
        print(f"simulate n={n}: wrote panels and aggregate to {outdir}")
    return EXIT_OK


def _method(model):
    return "chaos" if model.tag in ("linear", "dsv_star", "larch", "bilinear",
                                    "arch_inf", "garch11", "arch1") else "shift"


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(cfg, args):
    outdir = cfg.output_dir
    payload, hard_fail, failing = run_checks(cfg)
    annotations = []
    if hard_fail:
        if not args.force:
            print("hypothesis checks failed: " + ", ".join(failing))
            print("refusing to run (use --force to override)")
            if "json" in cfg.formats:
                rep.write_json(os.path.join(outdir, "check_report.json"), payload)
            return EXIT_HYPOTHESIS
        annotations.append("hypotheses unverified: " + ", ".join(failing))
    _emit_resolved(cfg, outdir)
    if "json" in cfg.formats:
        rep.write_json(os.path.join(outdir, "check_report.json"), payload)

    vcfg = cfg.validation
    if args.which == "clt":
        report = val.run_clt_experiment(
            cfg.model, cfg.environment, cfg.innovations, cfg.n_grid,
            replicates=int(vcfg["replicates"]), t_points=vcfg["t_points"],
            seed=child_seed(cfg.seed, "validate.clt"),
            env_seeds=int(vcfg["env_seeds"]), combo_weights=vcfg["combo_weights"],
            p_floor=float(vcfg["p_floor"]), normalization=cfg.normalization,
            threads=cfg.threads)
        report.annotations.extend(annotations)
        reps = int(vcfg["calibration_repetitions"])
        if reps > 0:
            report.calibration = val.clt_calibration_control(
                replicates=int(vcfg["replicates"]), repetitions=reps,
                seed=child_seed(cfg.seed, "validate.calibration"),
                level=float(vcfg["level"]))
        rep.emit_clt_report(outdir, report, formats=cfg.formats, figures=cfg.figures)
        print(f"clt: verdict {report.verdict}; median KS "
              + ", ".join(f"N={n}: {report.median_ks_limit[n]:.4f}" for n in report.n_grid))
        return EXIT_OK if report.verdict == "pass" else EXIT_RUNTIME
    if args.which == "slln":
        report = val.run_slln_experiment(
            cfg.model, cfg.environment, cfg.innovations, cfg.n_grid, cfg.taus,
            seed=child_seed(cfg.seed, "validate.slln"),
            env_seeds=max(int(vcfg["env_seeds"]), 20),
            shrink_required=float(vcfg["shrink_required"]), threads=cfg.threads)
        report.annotations.extend(annotations)
        rep.emit_slln_report(outdir, report, formats=cfg.formats, figures=cfg.figures)
        print(f"slln: verdict {report.verdict}; shrink "
              + ", ".join(f"tau={t}: {f:.2f}x" for t, f in report.shrink_factor.items()))
        return EXIT_OK if report.verdict == "pass" else EXIT_RUNTIME
    report = val.run_probe_experiment(
        cfg.model, cfg.environment, cfg.innovations,
        seed=child_seed(cfg.seed, "validate.probes"), delta=float(vcfg["delta"]),
        outside_trials=int(vcfg["outside_trials"]),
        trial_replicates=int(vcfg["trial_replicates"]),
        inside_replicates=int(vcfg["inside_replicates"]))
    report.annotations.extend(annotations)
    rep.emit_probe_report(outdir, report, formats=cfg.formats, figures=cfg.figures)
    print(f"probes: verdict {report.verdict}; outside pass rate "
          f"{report.outside_pass_rate:.3f}")
    return EXIT_OK if report.verdict == "pass" else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# estimate-chi
# ---------------------------------------------------------------------------

def cmd_estimate_chi(cfg, args):
    outdir = cfg.output_dir
    _emit_resolved(cfg, outdir)
    n = max(min(cfg.n_grid), 32)
    reps = max(int(cfg.validation["replicates"]) // 8, 16)
    t_len = min(cfg.t_len, 64)
    panels = [generate_panel(cfg.innovations, n, t_len,
                             seed=child_seed(cfg.seed, "estimate-chi", m))
              for m in range(reps)]
    kernel = theoretical_chi(cfg.innovations)
    r_max = min(n - 1, max(kernel.chi.size - 1, 8))
    est, se = estimate_chi(panels, r_max)
    theo = [kernel.value(r) for r in range(r_max + 1)]
    rep.emit_chi_report(outdir, range(r_max + 1), theo, est, se,
                        formats=cfg.formats, figures=cfg.figures)
    print(f"estimate-chi: wrote lags 0..{r_max} to {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except FileNotFoundError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        if args.command == "check":
            return cmd_check(cfg, args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "validate":
            return cmd_validate(cfg, args)
        if args.command == "estimate-chi":
            return cmd_estimate_chi(cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # surfaced with context, nonzero exit
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
