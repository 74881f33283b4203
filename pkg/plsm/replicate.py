"""
Replication driver: repeat simulate -> fit -> evaluate over a sweep of one
simulation setting and collect the results into tables.
"""
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed
from rich import box
from rich.console import Console
from rich.table import Table

from .fileio import FormatError
from .metrics import (PrCurve, average_pr_curves, constant_baseline_curve, precision_recall,
                      relative_errors, support_rates)
from .model import MultiEdgeNetwork, ObservationMask
from .optimizer import DEFAULT_WEIGHT_SCALE, WEIGHT_SCALES, FitConfig, fit, initialize_svt
from .simulate import SimConfig, simulate
from .tuning import predict_cells, sparsity_from_proportion
from .utils import PlsmError, derive_seed, logger, make_rng

SWEEPS = ("n", "K", "m", "density")
TASKS = ("estimation", "linkpred")
DEFAULT_REPS = 20
DEFAULT_HOLDOUT = 0.2

KEY_COLUMNS = ["level_index", "level", "rep", "seed"]
STATUS_COLUMNS = ["status", "error"]


def holdout_per_layer(net: MultiEdgeNetwork, fraction: float, seed: int) -> ObservationMask:
    """
    Hold out round(fraction * rows) cells of every topic layer, drawn without
    replacement. Placeholder rows of silent pairs are eligible.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"hold-out fraction must lie in (0, 1), got {fraction}")
    rng = make_rng(seed)
    cells = np.zeros(net.Y.shape, dtype=bool)
    size = int(round(fraction * net.n_rows))
    for k in range(net.K):
        cells[rng.choice(net.n_rows, size=size, replace=False), k] = True
    return ObservationMask(cells)


@dataclass
class ExperimentSpec:
    """
    One sweep of replications.

    ``base`` holds simulation settings (``SimConfig`` fields plus an optional
    nominal ``density``); ``fit`` holds ``max_iters``, ``tol``, ``s_prop`` and
    ``weight_scale``. The swept setting replaces its entry in ``base`` level by level.
    """
    sweep: str
    levels: List[Any]
    task: str = "estimation"
    base: Dict[str, Any] = field(default_factory=dict)
    fit: Dict[str, Any] = field(default_factory=dict)
    reps: int = DEFAULT_REPS
    seed: int = 0
    holdout: float = DEFAULT_HOLDOUT
    track_error: bool = False

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {', '.join(SWEEPS)}, got {self.sweep!r}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {', '.join(TASKS)}, got {self.task!r}")
        if not self.levels:
            raise ValueError("at least one sweep level is required")
        if self.sweep != "density":
            self.levels = [int(level) for level in self.levels]
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        unknown = set(self.fit) - {"max_iters", "tol", "s_prop", "weight_scale"}
        if unknown:
            raise ValueError(f"unknown fit options: {', '.join(sorted(unknown))}")
        if self.fit.get("weight_scale", DEFAULT_WEIGHT_SCALE) not in WEIGHT_SCALES:
            raise ValueError(f"unknown weight_scale {self.fit['weight_scale']!r}")
        # fail early on settings that no replication could use
        for index in range(len(self.levels)):
            self.sim_config(index, 0)

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentSpec":
        with open(path) as f:
            data = yaml.safe_load(f)
        if not isinstance(data, dict):
            raise FormatError(path, 1, "experiment file must be a YAML mapping")
        try:
            return cls.from_mapping(data)
        except (TypeError, ValueError) as e:
            raise FormatError(path, 1, str(e))

    def replication_seed(self, level_index: int, rep: int) -> int:
        return derive_seed(self.seed, level_index, rep)

    def sim_config(self, level_index: int, rep: int) -> SimConfig:
        kwargs = dict(self.base)
        density = kwargs.pop("density", None)
        level = self.levels[level_index]
        if self.sweep == "density":
            density = level
        else:
            kwargs[self.sweep] = level
        kwargs["seed"] = self.replication_seed(level_index, rep)
        if density is not None:
            kwargs.pop("a_range", None)
            return SimConfig.from_density(density, **kwargs)
        return SimConfig(**kwargs)

    def fit_config(self, cfg: SimConfig, seed: int) -> FitConfig:
        s = sparsity_from_proportion(self.fit.get("s_prop", cfg.q0), cfg.n, cfg.K)
        return FitConfig(
            d=cfg.d,
            s=s,
            max_iters=int(self.fit.get("max_iters", 2000)),
            tol=float(self.fit.get("tol", 1e-7)),
            seed=seed,
        )


@dataclass
class ExperimentTable:
    sweep: str
    task: str
    raw: pd.DataFrame
    curves: Dict[Any, List[PrCurve]] = field(default_factory=dict)

    @property
    def metric_columns(self) -> List[str]:
        skip = set(KEY_COLUMNS + STATUS_COLUMNS)
        return [c for c in self.raw.columns if c not in skip and pd.api.types.is_numeric_dtype(self.raw[c])]

    @property
    def failures(self) -> pd.DataFrame:
        return self.raw[self.raw["status"] != "ok"]

    def aggregate(self) -> pd.DataFrame:
        """Mean and 2.5/97.5 percent quantiles per level and metric over the successful rows."""
        ok = self.raw[self.raw["status"] == "ok"]
        rows = []
        for (index, level), group in ok.groupby(["level_index", "level"], sort=True):
            for metric in self.metric_columns:
                values = group[metric].astype(float).dropna()
                if values.empty:
                    continue
                rows.append({
                    "level": level,
                    "metric": metric,
                    "mean": float(values.mean()),
                    "q025": float(values.quantile(0.025)),
                    "q975": float(values.quantile(0.975)),
                    "reps": int(values.size),
                })
        return pd.DataFrame(rows, columns=["level", "metric", "mean", "q025", "q975", "reps"])

    def mean_curves(self) -> pd.DataFrame:
        frames = []
        for level, curves in self.curves.items():
            if not curves:
                continue
            recall, precision = average_pr_curves(curves)
            frames.append(pd.DataFrame({"level": level, "recall": recall, "precision": precision}))
        if not frames:
            return pd.DataFrame(columns=["level", "recall", "precision"])
        return pd.concat(frames, ignore_index=True)

    def write(self, out_dir: Union[str, Path]) -> List[Path]:
        """Write raw.csv, aggregate.csv and, for link prediction, pr_curves.csv."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / "raw.csv", out_dir / "aggregate.csv"]
        self.raw.to_csv(written[0], index=False)
        self.aggregate().to_csv(written[1], index=False)
        if self.task == "linkpred":
            written.append(out_dir / "pr_curves.csv")
            self.mean_curves().to_csv(written[-1], index=False)
        return written


def _estimation(spec: ExperimentSpec, cfg: SimConfig) -> Tuple[Dict[str, Any], None]:
    truth, net = simulate(cfg)
    config = spec.fit_config(cfg, derive_seed(cfg.seed, 2))
    init = initialize_svt(net, config.d, config.s, seed=config.seed,
                          weight_scale=spec.fit.get("weight_scale", DEFAULT_WEIGHT_SCALE))
    report = fit(net, None, config, init, truth=truth if spec.track_error else None)
    tpr, fpr = support_rates(report.params.W, truth.W)
    row = {"density": net.density(), **relative_errors(report.params, truth).as_dict(), "tpr": tpr, "fpr": fpr}
    row.update(iterations=report.iterations, converged=report.converged, objective=report.objective[-1],
               elapsed=report.elapsed)
    if report.error_trace:
        row.update(e_0=report.error_trace[0], e_final=report.error_trace[-1])
    return row, None


def _link_prediction(spec: ExperimentSpec, cfg: SimConfig) -> Tuple[Dict[str, Any], PrCurve]:
    _, net = simulate(cfg)
    held = holdout_per_layer(net, spec.holdout, derive_seed(cfg.seed, 3))
    train = held.complement()
    config = spec.fit_config(cfg, derive_seed(cfg.seed, 2))
    init = initialize_svt(net, config.d, config.s, mask=train, seed=config.seed,
                          weight_scale=spec.fit.get("weight_scale", DEFAULT_WEIGHT_SCALE))
    report = fit(net, train, config, init)
    (rows, ks), probs = predict_cells(report.params, net, held)
    ys = net.Y[rows, ks]
    curve = precision_recall(probs, ys)
    baseline = constant_baseline_curve(ys)
    row = {
        "density": net.density(),
        "auc": curve.auc,
        "baseline_auc": baseline.auc,
        "beats_baseline": bool(curve.auc > baseline.auc),
        "held_out": int(rows.size),
        "iterations": report.iterations,
        "converged": report.converged,
        "elapsed": report.elapsed,
    }
    return row, curve


def run_replication(spec: ExperimentSpec, level_index: int, rep: int) -> Tuple[Dict[str, Any], Optional[PrCurve]]:
    """One replication; failures are returned as a row with status 'failed'."""
    cfg = spec.sim_config(level_index, rep)
    keys = {"level_index": level_index, "level": spec.levels[level_index], "rep": rep, "seed": cfg.seed}
    try:
        task = _estimation if spec.task == "estimation" else _link_prediction
        row, curve = task(spec, cfg)
    except (PlsmError, ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        logger.warning(f"Replication {rep} at {spec.sweep}={keys['level']} failed: {e}")
        return {**keys, "status": "failed", "error": str(e)}, None
    return {**keys, **row, "status": "ok", "error": ""}, curve


def run_replications(spec: ExperimentSpec, n_jobs: int = 1) -> ExperimentTable:
    """
    Run every (level, rep) of ``spec``. Each replication derives its own seed,
    and results are merged in (level, rep) order whatever the worker count.
    """
    tasks = [(index, rep) for index in range(len(spec.levels)) for rep in range(spec.reps)]
    logger.info(f"Running {len(tasks)} {spec.task} replications over {spec.sweep} = {spec.levels}")
    results = Parallel(n_jobs=n_jobs)(delayed(run_replication)(spec, index, rep) for index, rep in tasks)

    rows = [row for row, _ in results]
    curves: Dict[Any, List[PrCurve]] = {level: [] for level in spec.levels}
    for (index, _), (_, curve) in zip(tasks, results):
        if curve is not None:
            curves[spec.levels[index]].append(curve)

    raw = pd.DataFrame(rows)
    ordered = KEY_COLUMNS + [c for c in raw.columns if c not in KEY_COLUMNS + STATUS_COLUMNS] + STATUS_COLUMNS
    raw = raw[ordered].sort_values(["level_index", "rep"], kind="stable").reset_index(drop=True)
    table = ExperimentTable(spec.sweep, spec.task, raw, curves)
    if len(table.failures):
        logger.warning(f"{len(table.failures)} of {len(raw)} replications failed")
    return table


def display_experiment(table: ExperimentTable, console: Console, metrics: Optional[Sequence[str]] = None):
    """Summary table: one row per metric, one column per level."""
    summary = table.aggregate()
    metrics = list(metrics) if metrics else table.metric_columns
    levels = list(dict.fromkeys(summary["level"])) if len(summary) else []

    out = Table(title=f"{table.task} over {table.sweep}", box=box.MINIMAL_DOUBLE_HEAD)
    out.add_column("Metric", style="cyan", no_wrap=True)
    for level in levels:
        out.add_column(f"{table.sweep}={level}", style="green")
    for metric in metrics:
        cells = []
        for level in levels:
            hit = summary[(summary["level"] == level) & (summary["metric"] == metric)]
            if hit.empty:
                cells.append("-")
            else:
                r = hit.iloc[0]
                cells.append(f"{r['mean']:.4g} [{r['q025']:.3g}, {r['q975']:.3g}]")
        out.add_row(metric, *cells)
    console.print(out)
