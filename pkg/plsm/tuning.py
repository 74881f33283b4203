"""
Edge cross-validation: cells (i, j, l, k) are split into L folds, each fold is
predicted by a model trained on the others, and the (d, s) pair with the
smallest mean binomial deviance wins.
"""
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import expit

from .model import MultiEdgeNetwork, ObservationMask, pair_log_odds
from .optimizer import DEFAULT_WEIGHT_SCALE, WEIGHT_SCALES, DivergenceError, FitConfig, fit, initialize_svt
from .utils import PlsmError, derive_seed, logger, make_rng

DEFAULT_FOLDS = 5
DEFAULT_S_PROPORTIONS = (0.4, 0.55, 0.7, 0.85, 1.0)
PROB_CLIP = 1e-12


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """
    ``assignment`` is aligned with the network cells; entry f in [0, L) puts
    the cell in fold f, -1 leaves it out of every fold.
    """
    L: int
    assignment: np.ndarray
    seed: int

    def validation_mask(self, fold: int) -> ObservationMask:
        return ObservationMask(self.assignment == fold)

    def training_mask(self, fold: int) -> ObservationMask:
        return ObservationMask((self.assignment >= 0) & (self.assignment != fold))

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment[self.assignment >= 0], minlength=self.L)


@dataclass
class CvResult:
    candidates: List[Tuple[int, int]]
    proportions: List[float]
    fold_deviance: np.ndarray
    failed: List[Tuple[int, int]]
    selected: Tuple[int, int]
    n_predictions: int

    @property
    def mean_deviance(self) -> np.ndarray:
        return self.fold_deviance.mean(axis=1)

    def frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "d": [c[0] for c in self.candidates],
            "s": [c[1] for c in self.candidates],
            "s_prop": self.proportions,
        })
        for f in range(self.fold_deviance.shape[1]):
            frame[f"fold_{f}"] = self.fold_deviance[:, f]
        frame["mean_deviance"] = self.mean_deviance
        frame["failed"] = [c in self.failed for c in self.candidates]
        frame["selected"] = [c == self.selected for c in self.candidates]
        return frame


def sparsity_from_proportion(proportion: float, n: int, K: int) -> int:
    if not 0 < proportion <= 1:
        raise ValueError(f"sparsity proportion must lie in (0, 1], got {proportion}")
    return int(min(n * K, max(1, round(proportion * n * K))))


def make_folds(net: MultiEdgeNetwork, L: int, seed: int, mask: Optional[ObservationMask] = None) -> FoldPlan:
    """Uniform random partition of the (masked) cells into L folds."""
    if L < 2:
        raise ValueError(f"need at least 2 folds, got {L}")
    base = ObservationMask.full(net) if mask is None else mask
    base.check(net)
    idx = np.flatnonzero(base.cells)
    if L > idx.size:
        raise ValueError(f"{L} folds requested for only {idx.size} cells")
    rng = make_rng(seed)
    assignment = np.full(net.Y.shape, -1, dtype=np.int64)
    assignment.flat[idx] = rng.permutation(idx.size) % L
    return FoldPlan(L, assignment, seed)


def binomial_deviance(probs: Sequence[float], ys: Sequence[int]) -> float:
    """-2 * sum [ y log p + (1 - y) log(1 - p) ]."""
    probs = np.asarray(probs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if probs.shape != ys.shape:
        raise ValueError("probs and ys must have equal length")
    if np.any((probs <= 0) | (probs >= 1)):
        raise ValueError("predicted probabilities must lie strictly inside (0, 1)")
    return float(-2 * np.sum(ys * np.log(probs) + (1 - ys) * np.log1p(-probs)))


def predict_cells(params, net: MultiEdgeNetwork, mask: ObservationMask) -> Tuple[np.ndarray, np.ndarray]:
    """(rows, topics) of the masked cells and their predicted edge probabilities."""
    mask.check(net)
    rows, ks = np.nonzero(mask.cells)
    lam = pair_log_odds(params, net.pair_i, net.pair_j)
    probs = expit(lam)[net.doc_pair[rows], ks]
    return (rows, ks), probs


def _score_fold(net: MultiEdgeNetwork, plan: FoldPlan, fold: int, d: int, s: int, config: FitConfig,
                seed: int, weight_scale: str = DEFAULT_WEIGHT_SCALE) -> Optional[Tuple[float, int]]:
    train = plan.training_mask(fold)
    validation = plan.validation_mask(fold)
    assert not train.intersects(validation), "training and validation cells overlap"
    init = initialize_svt(net, d, s, mask=train, seed=seed, weight_scale=weight_scale)
    try:
        report = fit(net, train, replace(config, d=d, s=s, seed=seed), init)
    except DivergenceError as e:
        logger.warning(f"Fold {fold} diverged for d={d}, s={s} at iteration {e.iteration}")
        return None
    (rows, ks), probs = predict_cells(report.params, net, validation)
    probs = np.clip(probs, PROB_CLIP, 1 - PROB_CLIP)
    return binomial_deviance(probs, net.Y[rows, ks]), int(rows.size)


def cross_validate(net: MultiEdgeNetwork, d_grid: Sequence[int], s_grid: Sequence[float] = DEFAULT_S_PROPORTIONS,
                   L: int = DEFAULT_FOLDS, config: Optional[FitConfig] = None, seed: int = 0, n_jobs: int = 1,
                   mask: Optional[ObservationMask] = None, weight_scale: str = DEFAULT_WEIGHT_SCALE) -> CvResult:
    """
    Select (d, s) by edge cross-validation.

    Args:
        d_grid: candidate latent dimensions
        s_grid: candidate sparsity levels as proportions of nK
        L: number of folds
        config: template fit settings; its d and s are overridden per candidate
        seed: seeds the fold split and every fold fit
        n_jobs: joblib workers; results are merged in candidate order
        mask: restrict cross-validation to these cells (e.g. after a hold-out)
        weight_scale: scale of the initial weights of every fold fit
    """
    if not d_grid or not s_grid:
        raise ValueError("d_grid and s_grid must be nonempty")
    if weight_scale not in WEIGHT_SCALES:
        raise ValueError(f"unknown weight_scale {weight_scale!r}")
    config = config or FitConfig(d=1, s=1)
    plan = make_folds(net, L, seed, mask=mask)
    grid = [(int(d), float(p)) for d in sorted(set(d_grid)) for p in sorted(set(s_grid))]
    candidates = [(d, sparsity_from_proportion(p, net.n, net.K)) for d, p in grid]
    for d, _ in candidates:
        if not 1 <= d <= net.n:
            raise ValueError(f"latent dimension {d} out of range for n={net.n}")

    tasks = [(c, f) for c in range(len(candidates)) for f in range(L)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_score_fold)(net, plan, f, *candidates[c], config, derive_seed(seed, c, f), weight_scale)
        for c, f in tasks
    )

    deviance = np.full((len(candidates), L), np.nan)
    predictions = np.zeros(len(candidates), dtype=np.int64)
    for (c, f), result in zip(tasks, results):
        if result is not None:
            deviance[c, f], count = result
            predictions[c] += count

    failed = []
    selected, best = None, np.inf
    total = int(plan.sizes().sum())
    for c, candidate in enumerate(candidates):
        if np.isnan(deviance[c]).any():
            logger.warning(f"Excluding candidate d={candidate[0]}, s={candidate[1]}: a fold fit diverged")
            failed.append(candidate)
            continue
        assert predictions[c] == total, "fold predictions do not cover every cell exactly once"
        mean = deviance[c].mean()
        logger.info(f"d={candidate[0]}, s={candidate[1]}: mean deviance {mean:.6g}")
        if mean < best:
            selected, best = candidate, mean
    if selected is None:
        raise PlsmError("every cross-validation candidate failed")

    return CvResult(candidates, [p for _, p in grid], deviance, failed, selected, total)
