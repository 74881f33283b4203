#!/usr/bin/env python3
import argparse
import os
import sys
from dataclasses import fields
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from rich.panel import Panel

from .coords import group_weight_summary, positions_frame, preferential_frame, read_groups
from .fileio import (load_config, read_mask, read_model, read_network, read_predictions, resolve_options,
                     write_mask, write_model, write_network, write_predictions)
from .metrics import UndefinedRateError, constant_baseline_curve, precision_recall, relative_errors, support_rates
from .model import MultiEdgeNetwork, ObservationMask
from .optimizer import (DEFAULT_WEIGHT_SCALE, WEIGHT_SCALES, Backtracking, DivergenceError, FitConfig, FixedSteps,
                        fit, initialize_svt)
from .replicate import ExperimentSpec, display_experiment, holdout_per_layer, run_replications
from .simulate import SimConfig, simulate
from .tuning import DEFAULT_FOLDS, DEFAULT_S_PROPORTIONS, cross_validate, predict_cells, sparsity_from_proportion
from .utils import console, logger

EXIT_USAGE = 1
EXIT_NUMERICAL = 2

NUMERICAL_ERRORS = (DivergenceError, UndefinedRateError, FloatingPointError, np.linalg.LinAlgError)

SIM_DEFAULTS = {f.name: f.default for f in fields(SimConfig)}
SIM_DEFAULTS["density"] = None
FIT_DEFAULTS = {
    "d": None, "s": None, "s_prop": None, "max_iters": 2000, "tol": 1e-7, "seed": 0,
    "fixed_steps": None, "weight_scale": DEFAULT_WEIGHT_SCALE, "holdout": None, "mask_seed": 0,
}
CV_DEFAULTS = {
    "d": [1, 2, 3, 4], "s_prop": list(DEFAULT_S_PROPORTIONS), "folds": DEFAULT_FOLDS, "seed": 0,
    "max_iters": 2000, "tol": 1e-7, "holdout": None, "mask_seed": 0, "weight_scale": DEFAULT_WEIGHT_SCALE,
}


class PlsmArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        console.print(f"[red]Error:[/red] {message}", style="red")
        sys.exit(EXIT_USAGE)


def main(argv=None):
    parser = PlsmArgumentParser(
        prog="plsm",
        description="plsm - fit, tune and evaluate preferential latent space models of multi-edge networks",
        epilog="""Examples:
  plsm simulate --n 100 --K 10 --density 0.08 --out sim
  plsm fit sim.network --d 2 --s-prop 0.7 --out fit
  plsm cv sim.network --d 1 2 3 --s-prop 0.55 0.7 0.85 --out cv.csv
  plsm fit sim.network --d 2 --s 700 --holdout 0.2 --mask-seed 7 --out held
  plsm predict held.model sim.network --mask held.holdout.csv --out pred.csv
  plsm eval --predictions pred.csv --network sim.network --out pr.csv
  plsm replicate experiment.yaml --reps 20 --out results/
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default="INFO", help="Set logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)")
    parser.add_argument("--config", help="YAML file with per-subcommand option sections; flags win")
    parser.add_argument("--threads", type=_thread_count, default=os.environ.get("PLSM_THREADS", "1"),
                        help="Worker processes for cross-validation and replications (default: $PLSM_THREADS or 1)")
    parser.add_argument("--sequential", action="store_true",
                        help="Run everything in one worker (bit-exact reruns)")

    subparsers = parser.add_subparsers(dest="command", required=True)

    # --- simulate command ---
    sim_parser = subparsers.add_parser("simulate", help="Draw a ground truth and a network from the model")
    sim_parser.add_argument("--n", type=int, help="Number of nodes (default 100)")
    sim_parser.add_argument("--K", type=int, help="Number of topics (default 10)")
    sim_parser.add_argument("--d", type=int, help="Latent dimension (default 2)")
    sim_parser.add_argument("--m", type=int, help="Documents per pair (default 1)")
    sim_parser.add_argument("--q0", type=float, help="Proportion of nonzero weights (default 0.7)")
    sim_parser.add_argument("--density", type=float, help="Nominal density 0.04, 0.08, 0.12 or 0.16")
    sim_parser.add_argument("--seed", type=int, help="Random seed (default 0)")
    sim_parser.add_argument("--out", required=True, help="Output prefix; writes <out>.network and <out>.truth.model")
    sim_parser.set_defaults(func=handle_simulate)

    # --- fit command ---
    fit_parser = subparsers.add_parser(
        "fit",
        help="Fit a model by projected gradient descent from the spectral start",
        epilog="""With --mask or --holdout the listed cells are held out and the fit uses the rest.
Writes <out>.model and <out>.trace.csv (and <out>.holdout.csv for --holdout).
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    fit_parser.add_argument("network", help="Network file")
    fit_parser.add_argument("--d", type=int, help="Latent dimension")
    sparsity = fit_parser.add_mutually_exclusive_group()
    sparsity.add_argument("--s", type=int, help="Number of nonzero weights")
    sparsity.add_argument("--s-prop", type=float, help="Nonzero weights as a proportion of nK")
    fit_parser.add_argument("--max-iters", type=int, help="Iteration cap (default 2000)")
    fit_parser.add_argument("--tol", type=float, help="Relative objective change to stop at (default 1e-7)")
    fit_parser.add_argument("--fixed-steps", type=float, nargs=3, metavar=("ETA_A", "ETA_W", "ETA_U"),
                            help="Fixed step sizes instead of backtracking")
    fit_parser.add_argument("--weight-scale", choices=WEIGHT_SCALES,
                            help=f"Scale of the initial weights (default {DEFAULT_WEIGHT_SCALE})")
    fit_parser.add_argument("--truth", help="Ground-truth model file; records the error of every iterate")
    _add_mask_arguments(fit_parser)
    fit_parser.add_argument("--seed", type=int, help="Random seed (default 0)")
    fit_parser.add_argument("--out", required=True, help="Output prefix")
    fit_parser.set_defaults(func=handle_fit)

    # --- cv command ---
    cv_parser = subparsers.add_parser("cv", help="Select (d, s) by edge cross-validation")
    cv_parser.add_argument("network", help="Network file")
    cv_parser.add_argument("--d", type=int, nargs="+", help="Candidate latent dimensions (default 1 2 3 4)")
    cv_parser.add_argument("--s-prop", type=float, nargs="+", help="Candidate sparsity proportions of nK")
    cv_parser.add_argument("--folds", type=int, help=f"Number of folds (default {DEFAULT_FOLDS})")
    cv_parser.add_argument("--max-iters", type=int, help="Iteration cap per fold fit")
    cv_parser.add_argument("--tol", type=float, help="Stopping tolerance per fold fit")
    cv_parser.add_argument("--weight-scale", choices=WEIGHT_SCALES,
                           help=f"Scale of the initial weights of every fold fit (default {DEFAULT_WEIGHT_SCALE})")
    _add_mask_arguments(cv_parser)
    cv_parser.add_argument("--seed", type=int, help="Random seed (default 0)")
    cv_parser.add_argument("--out", required=True, help="CSV with the deviance of every candidate")
    cv_parser.set_defaults(func=handle_cv)

    # --- predict command ---
    predict_parser = subparsers.add_parser("predict", help="Predict edge probabilities for masked cells")
    predict_parser.add_argument("model", help="Model file")
    predict_parser.add_argument("network", help="Network file")
    _add_mask_arguments(predict_parser)
    predict_parser.add_argument("--out", required=True, help="CSV of i,j,l,k,prob")
    predict_parser.set_defaults(func=handle_predict)

    # --- eval command ---
    eval_parser = subparsers.add_parser(
        "eval",
        help="Precision-recall of predictions, or estimation errors against a truth",
        epilog="""Give --predictions with --network for a precision-recall curve,
and/or --model with --truth for relative errors and support recovery.
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    eval_parser.add_argument("--predictions", help="Predictions CSV from 'plsm predict'")
    eval_parser.add_argument("--network", help="Network holding the outcomes")
    eval_parser.add_argument("--model", help="Estimated model file")
    eval_parser.add_argument("--truth", help="Ground-truth model file")
    eval_parser.add_argument("--out", help="CSV of threshold,precision,recall")
    eval_parser.set_defaults(func=handle_eval)

    # --- replicate command ---
    rep_parser = subparsers.add_parser("replicate", help="Run a replication sweep from an experiment file")
    rep_parser.add_argument("experiment", help="YAML experiment file")
    rep_parser.add_argument("--reps", type=int, help="Replications per level")
    rep_parser.add_argument("--sweep", choices=["n", "K", "m", "density"], help="Override the swept setting")
    rep_parser.add_argument("--levels", type=float, nargs="+", help="Override the sweep levels")
    rep_parser.add_argument("--seed", type=int, help="Root seed")
    rep_parser.add_argument("--out", required=True, help="Output directory")
    rep_parser.set_defaults(func=handle_replicate)

    # --- coords command ---
    coords_parser = subparsers.add_parser("coords", help="Write plotting coordinates of a fitted model")
    coords_parser.add_argument("model", help="Model file")
    coords_parser.add_argument("--reference", help="Model to rotate the latent positions onto")
    coords_parser.add_argument("--topics", type=int, nargs="+", default=[], help="Topics for preferential positions")
    coords_parser.add_argument("--groups", help="CSV with columns node,group")
    coords_parser.add_argument("--out", required=True, help="Output prefix")
    coords_parser.set_defaults(func=handle_coords)

    args = parser.parse_args(argv)

    logger.setLevel(args.log_level.upper())
    args.func(args)


def _thread_count(value: str) -> int:
    """Worker count from --threads or PLSM_THREADS."""
    count = int(value) if value.strip().isdigit() else 0
    if count < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}")
    return count


def _add_mask_arguments(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--mask", help="CSV of held-out cells (columns i,j,l,k)")
    group.add_argument("--holdout", type=float, help="Hold out this fraction of every topic layer")
    parser.add_argument("--mask-seed", type=int, help="Seed of the --holdout draw (default 0)")


def _fail(e: Exception):
    console.print(f"[red]Error:[/red] {str(e)}", style="red")
    sys.exit(EXIT_NUMERICAL if isinstance(e, NUMERICAL_ERRORS) else EXIT_USAGE)


def _n_jobs(args) -> int:
    return 1 if args.sequential else max(1, args.threads)


def _options(section: str, args, defaults: Dict[str, Any]) -> Dict[str, Any]:
    flags = {k: v for k, v in vars(args).items() if k in defaults}
    opts = resolve_options(section, load_config(args.config), flags, defaults)
    return {k: v for k, v in opts.items() if k in defaults}


def _held_out(args, opts: Dict[str, Any], net: MultiEdgeNetwork) -> Optional[ObservationMask]:
    if getattr(args, "mask", None):
        return read_mask(args.mask, net)
    if opts.get("holdout") is not None:
        return holdout_per_layer(net, float(opts["holdout"]), int(opts.get("mask_seed") or 0))
    return None


def handle_simulate(args):
    try:
        opts = _options("simulate", args, SIM_DEFAULTS)
        density = opts.pop("density")
        if density is not None:
            opts.pop("a_range", None)
            cfg = SimConfig.from_density(density, **opts)
        else:
            cfg = SimConfig(**opts)
        with console.status("Simulating network..."):
            truth, net = simulate(cfg)
        write_network(net, f"{args.out}.network")
        write_model(truth, f"{args.out}.truth.model", meta={"simulation": {
            "n": cfg.n, "K": cfg.K, "d": cfg.d, "m": cfg.m, "q0": cfg.q0,
            "a_range": list(cfg.a_range), "w_range": list(cfg.w_range), "seed": cfg.seed,
        }})
        console.print(Panel(
            f"[green]Wrote {args.out}.network and {args.out}.truth.model\n"
            f"empirical density: {net.density():.4f}"
        ))
        print(f"density {net.density():.6f}")
    except Exception as e:
        _fail(e)


def handle_fit(args):
    report = None
    try:
        opts = _options("fit", args, FIT_DEFAULTS)
        net = read_network(args.network)
        if opts["d"] is None:
            raise ValueError("--d is required")
        if args.s_prop is not None or (opts["s"] is None and opts["s_prop"] is not None):
            s = sparsity_from_proportion(float(opts["s_prop"]), net.n, net.K)
        elif opts["s"] is not None:
            s = int(opts["s"])
        else:
            raise ValueError("one of --s or --s-prop is required")
        steps = FixedSteps(*opts["fixed_steps"]) if opts["fixed_steps"] else Backtracking()
        config = FitConfig(d=int(opts["d"]), s=s, max_iters=int(opts["max_iters"]), tol=float(opts["tol"]),
                           step_mode=steps, seed=int(opts["seed"]))

        held = _held_out(args, opts, net)
        train = held.complement() if held is not None else None
        if held is not None and not args.mask:
            write_mask(held, net, f"{args.out}.holdout.csv")
        truth = read_model(args.truth)[0] if args.truth else None

        init = initialize_svt(net, config.d, config.s, mask=train, seed=config.seed,
                              weight_scale=opts["weight_scale"])
        try:
            with console.status(f"Fitting d={config.d}, s={config.s}..."):
                report = fit(net, train, config, init, truth=truth)
        except DivergenceError as e:
            e.report.trace_frame().to_csv(f"{args.out}.trace.csv", index=False)
            raise

        meta = {
            "config": config.to_dict(),
            "objective": report.objective[-1],
            "iterations": report.iterations,
            "converged": report.converged,
            "network": str(args.network),
        }
        write_model(report.params, f"{args.out}.model", meta=meta)
        report.trace_frame().to_csv(f"{args.out}.trace.csv", index=False)
        status = "converged" if report.converged else "stopped at max_iters"
        console.print(Panel(
            f"[green]{status} after {report.iterations} iterations, objective {report.objective[-1]:.6g}\n"
            f"Wrote {args.out}.model and {args.out}.trace.csv"
        ))
    except Exception as e:
        _fail(e)


def handle_cv(args):
    try:
        opts = _options("cv", args, CV_DEFAULTS)
        net = read_network(args.network)
        held = _held_out(args, opts, net)
        template = FitConfig(d=1, s=1, max_iters=int(opts["max_iters"]), tol=float(opts["tol"]))
        with console.status("Cross-validating..."):
            result = cross_validate(
                net, [int(d) for d in opts["d"]], [float(p) for p in opts["s_prop"]],
                L=int(opts["folds"]), config=template, seed=int(opts["seed"]), n_jobs=_n_jobs(args),
                mask=held.complement() if held is not None else None, weight_scale=opts["weight_scale"],
            )
        result.frame().to_csv(args.out, index=False)
        d, s = result.selected
        console.print(Panel(f"[green]Selected d={d}, s={s} from {len(result.candidates)} candidates\n"
                            f"Wrote the deviance grid to {args.out}"))
        print(f"selected d={d} s={s}")
    except Exception as e:
        _fail(e)


def handle_predict(args):
    try:
        opts = {"holdout": args.holdout, "mask_seed": args.mask_seed}
        params, _ = read_model(args.model)
        net = read_network(args.network)
        if (params.n, params.K) != (net.n, net.K):
            raise ValueError(f"model (n={params.n}, K={params.K}) does not match network (n={net.n}, K={net.K})")
        mask = _held_out(args, opts, net) or ObservationMask.full(net)
        (rows, ks), probs = predict_cells(params, net, mask)
        i, j, l = net.row_coordinates()
        cells = np.column_stack((i[rows], j[rows], l[rows], ks))
        write_predictions(cells, probs, args.out)
        console.print(f"[green]Wrote {probs.size} predictions to {args.out}")
    except Exception as e:
        _fail(e)


def handle_eval(args):
    try:
        if not (args.predictions and args.network) and not (args.model and args.truth):
            raise ValueError("give --predictions with --network, or --model with --truth")
        if args.model and args.truth:
            est, _ = read_model(args.model)
            truth, _ = read_model(args.truth)
            summary = relative_errors(est, truth).as_dict()
            summary["tpr"], summary["fpr"] = support_rates(est.W, truth.W)
            for key, value in summary.items():
                print(f"{key} {value!r}")
        if args.predictions and args.network:
            frame = read_predictions(args.predictions)
            net = read_network(args.network)
            rows = [net.row_index(i, j, l) for i, j, l in frame[["i", "j", "l"]].itertuples(index=False, name=None)]
            ys = net.Y[rows, frame["k"].to_numpy()]
            curve = precision_recall(frame["prob"].to_numpy(), ys)
            baseline = constant_baseline_curve(ys)
            if args.out:
                pd.DataFrame({"threshold": curve.thresholds, "precision": curve.precision,
                              "recall": curve.recall}).to_csv(args.out, index=False)
            console.print(Panel(f"[green]PR-AUC {curve.auc:.4f} (constant baseline {baseline.auc:.4f})"))
            print(f"auc {curve.auc!r}")
    except Exception as e:
        _fail(e)


def handle_replicate(args):
    try:
        spec = ExperimentSpec.from_file(args.experiment)
        overrides = {}
        if args.reps is not None:
            overrides["reps"] = args.reps
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.sweep is not None:
            overrides["sweep"] = args.sweep
        if args.levels is not None:
            overrides["levels"] = args.levels
        if overrides:
            spec = ExperimentSpec.from_mapping({**vars(spec), **overrides})
        with console.status(f"Running {spec.reps} replications per level..."):
            table = run_replications(spec, n_jobs=_n_jobs(args))
        written = table.write(args.out)
        display_experiment(table, console)
        console.print(f"[green]Wrote {', '.join(str(p) for p in written)}")
    except Exception as e:
        _fail(e)


def handle_coords(args):
    try:
        params, _ = read_model(args.model)
        reference = read_model(args.reference)[0] if args.reference else None
        written = [f"{args.out}.positions.csv"]
        positions_frame(params, reference).to_csv(written[-1], index=False)
        if args.topics:
            written.append(f"{args.out}.preferential.csv")
            preferential_frame(params, args.topics, reference).to_csv(written[-1], index=False)
        if args.groups:
            written.append(f"{args.out}.groups.csv")
            group_weight_summary(params, read_groups(args.groups, params.n)).to_csv(written[-1], index=False)
        console.print(f"[green]Wrote {', '.join(written)}")
    except Exception as e:
        _fail(e)


if __name__ == "__main__":
    main()
