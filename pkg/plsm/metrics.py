"""
Evaluation quantities: Procrustes distance, relative estimation errors, the
iterate error e_t, support recovery rates and precision-recall curves.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import orthogonal_procrustes
from scipy.special import expit
from sklearn.metrics import auc, precision_recall_curve

from .model import ModelParams, log_odds_matrix
from .utils import PlsmError


class UndefinedRateError(PlsmError, ValueError):
    """A rate was requested over an empty reference class."""


@dataclass(frozen=True)
class ErrorSummary:
    rel_a: float
    rel_W: float
    rel_U: float
    rel_prob: float

    def as_dict(self) -> dict:
        return {"rel_a": self.rel_a, "rel_W": self.rel_W, "rel_U": self.rel_U, "rel_prob": self.rel_prob}


@dataclass(frozen=True, eq=False)
class PrCurve:
    """
    Precision and recall at every distinct score threshold, thresholds
    ascending, so recall is non-increasing along the arrays.
    """
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float

    def points(self) -> List[Tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist()))


def procrustes_distance(U1: np.ndarray, U2: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    min over orthogonal R of ||U1 - U2 R||_F, and the minimizing R.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.shape != U2.shape:
        raise ValueError(f"shape mismatch: {U1.shape} vs {U2.shape}")
    R, _ = orthogonal_procrustes(U2, U1)
    return float(np.linalg.norm(U1 - U2 @ R)), R


def _check_shapes(est: ModelParams, truth: ModelParams) -> None:
    if (est.n, est.K, est.d) != (truth.n, truth.K, truth.d):
        raise ValueError(
            f"estimate (n={est.n}, K={est.K}, d={est.d}) does not match truth (n={truth.n}, K={truth.K}, d={truth.d})"
        )


def _ratio(num: float, den: float, name: str) -> float:
    if den == 0:
        raise ValueError(f"relative error of {name} is undefined: the reference is zero")
    return float(num / den)


def relative_errors(est: ModelParams, truth: ModelParams) -> ErrorSummary:
    """
    Squared relative errors of a, W, U (after Procrustes alignment) and of the
    edge probabilities averaged over topics; self-pairs are excluded.
    """
    _check_shapes(est, truth)
    dist, _ = procrustes_distance(est.U, truth.U)
    pi, pj = np.triu_indices(truth.n, 1)
    p_est = expit(log_odds_matrix(est)[pi, pj])
    p_true = expit(log_odds_matrix(truth)[pi, pj])
    per_topic = np.sum((p_est - p_true) ** 2, axis=0)
    ref = np.sum(p_true ** 2, axis=0)
    if np.any(ref == 0):
        raise ValueError("relative error of probabilities is undefined: a topic has zero reference")
    return ErrorSummary(
        rel_a=_ratio(np.sum((est.a - truth.a) ** 2), np.sum(truth.a ** 2), "a"),
        rel_W=_ratio(np.sum((est.W - truth.W) ** 2), np.sum(truth.W ** 2), "W"),
        rel_U=_ratio(dist ** 2, np.sum(truth.U ** 2), "U"),
        rel_prob=float(np.mean(per_topic / ref)),
    )


def error_metric_et(est: ModelParams, truth: ModelParams, sigma1_star: float, wmax: float) -> float:
    """
    e = 2Kn ||a - a*||^2 + sigma1*^2 wmax^2 ||W - W*||_F^2 + K sigma1*^2 wmax^4 dist^2(U, U*)
    """
    _check_shapes(est, truth)
    if sigma1_star <= 0 or wmax <= 0:
        raise ValueError("sigma1_star and wmax must be positive")
    n, K = truth.n, truth.K
    dist, _ = procrustes_distance(est.U, truth.U)
    return float(
        2 * K * n * np.sum((est.a - truth.a) ** 2)
        + sigma1_star ** 2 * wmax ** 2 * np.sum((est.W - truth.W) ** 2)
        + K * sigma1_star ** 2 * wmax ** 4 * dist ** 2
    )


def support_rates(W_est: np.ndarray, W_true: np.ndarray) -> Tuple[float, float]:
    """(TPR, FPR) of the estimated support of W against the true support."""
    W_est = np.asarray(W_est)
    W_true = np.asarray(W_true)
    if W_est.shape != W_true.shape:
        raise ValueError(f"shape mismatch: {W_est.shape} vs {W_true.shape}")
    selected = W_est > 0
    truly = W_true > 0
    if not truly.any():
        raise UndefinedRateError("TPR is undefined: the true W has no nonzero entries")
    if truly.all():
        raise UndefinedRateError("FPR is undefined: the true W has no zero entries")
    tpr = np.sum(selected & truly) / np.sum(truly)
    fpr = np.sum(selected & ~truly) / np.sum(~truly)
    return float(tpr), float(fpr)


def precision_recall(probs: Sequence[float], ys: Sequence[int]) -> PrCurve:
    """
    Precision-recall sweep over the distinct predicted scores.

    The area is the trapezoid rule over recall, anchored at (recall 0, precision 1).
    """
    probs = np.asarray(probs, dtype=float)
    ys = np.asarray(ys).astype(int)
    if probs.shape != ys.shape or probs.size == 0:
        raise ValueError("probs and ys must be nonempty and of equal length")
    if not ys.any():
        raise UndefinedRateError("precision-recall is undefined without positive outcomes")
    precision, recall, thresholds = precision_recall_curve(ys, probs)
    area = float(auc(recall, precision))
    return PrCurve(thresholds, precision[:-1], recall[:-1], area)


def constant_baseline_curve(ys: Sequence[int]) -> PrCurve:
    """The curve of a predictor that scores every cell with the base rate."""
    ys = np.asarray(ys).astype(int)
    return precision_recall(np.full(ys.shape, ys.mean() if ys.size else 0.0), ys)


def average_pr_curves(curves: Sequence[PrCurve], recall_grid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Average several curves on a common recall grid.

    Each curve contributes, at recall r, its best precision among thresholds
    reaching recall >= r.
    """
    if not curves:
        raise ValueError("no curves to average")
    if recall_grid is None:
        recall_grid = np.linspace(0.0, 1.0, 101)
    stacked = []
    for curve in curves:
        row = np.zeros(recall_grid.shape)
        for idx, r in enumerate(recall_grid):
            reach = curve.recall >= r
            row[idx] = curve.precision[reach].max() if reach.any() else 0.0
        stacked.append(row)
    return recall_grid, np.mean(stacked, axis=0)
