"""
Projected gradient descent for the preferential latent space model.

Each iteration takes a gradient step on every block at the incoming iterate,
hard-thresholds W onto its s largest (nonnegative) entries and pulls the rows
of U back onto the unit sphere.
"""
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import eigh
from scipy.special import logit

from .metrics import error_metric_et
from .model import ModelParams, MultiEdgeNetwork, ObservationMask, PairStatistics
from .utils import PlsmError, logger, make_rng

Steps = Tuple[float, float, float]

WEIGHT_SCALES = ("row-norm", "eigenvalue")
DEFAULT_WEIGHT_SCALE = "row-norm"


class DegenerateRowError(PlsmError, ValueError):
    """A row of U is the zero vector and cannot be projected onto the sphere."""

    def __init__(self, rows):
        self.rows = [int(r) for r in rows]
        super().__init__(f"zero rows in U cannot be normalized: {self.rows}")


class DivergenceError(PlsmError):
    """The objective became non-finite during a fit."""

    def __init__(self, iteration: int, report: "FitReport"):
        self.iteration = iteration
        self.report = report
        super().__init__(f"objective is not finite at iteration {iteration}")


@dataclass(frozen=True)
class FixedSteps:
    eta_a: float
    eta_W: float
    eta_U: float

    def __post_init__(self):
        if min(self.eta_a, self.eta_W, self.eta_U) <= 0:
            raise ValueError("step sizes must be positive")

    @property
    def steps(self) -> Steps:
        return (self.eta_a, self.eta_W, self.eta_U)


@dataclass(frozen=True)
class Backtracking:
    """Blockwise Armijo backtracking; every iteration restarts from ``initial_step``."""
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_step: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if not 0 < self.sufficient_decrease < 1:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.initial_step <= 0 or self.max_backtracks < 1:
            raise ValueError("initial step must be positive and max_backtracks >= 1")


@dataclass(frozen=True)
class FitConfig:
    d: int
    s: int
    max_iters: int = 2000
    tol: float = 1e-7
    step_mode: Union[FixedSteps, Backtracking] = field(default_factory=Backtracking)
    seed: int = 0

    def validate(self, n: int, K: int) -> None:
        if not 1 <= self.d <= n:
            raise ValueError(f"latent dimension d={self.d} must satisfy 1 <= d <= n={n}")
        if not 1 <= self.s <= n * K:
            raise ValueError(f"sparsity s={self.s} must satisfy 1 <= s <= nK={n * K}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["step_mode"] = {"kind": type(self.step_mode).__name__.lower(), **asdict(self.step_mode)}
        return out


@dataclass
class FitReport:
    params: ModelParams
    objective: List[float]
    steps: List[Steps]
    converged: bool
    iterations: int
    error_trace: Optional[List[float]] = None
    elapsed: float = 0.0

    def trace_frame(self) -> pd.DataFrame:
        """One row per iterate; row 0 is the starting point (no step taken)."""
        steps = [(np.nan, np.nan, np.nan)] + list(self.steps)
        frame = pd.DataFrame({
            "iter": np.arange(len(self.objective)),
            "objective": self.objective,
            "eta_a": [s[0] for s in steps],
            "eta_W": [s[1] for s in steps],
            "eta_U": [s[2] for s in steps],
        })
        if self.error_trace is not None:
            frame["e_t"] = self.error_trace
        return frame


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def truncate(W: np.ndarray, s: int) -> np.ndarray:
    """
    Keep the s largest entries of W, zero the rest, and clamp kept entries at 0.

    Ties at the s-th value go to the smallest (row, column) index.
    """
    W = np.asarray(W, dtype=float)
    total = W.size
    if not 0 <= s <= total:
        raise ValueError(f"s={s} must satisfy 0 <= s <= {total}")
    flat = W.ravel()
    order = np.lexsort((np.arange(total), -flat))
    keep = order[:s]
    out = np.zeros(total)
    out[keep] = np.maximum(flat[keep], 0.0)
    return out.reshape(W.shape)


def project_rows_to_sphere(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    norms = np.linalg.norm(U, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateRowError(zero)
    return U / norms[:, None]


def _project_or_reseed(U: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    try:
        return project_rows_to_sphere(U)
    except DegenerateRowError as e:
        logger.warning(f"Re-randomizing degenerate latent rows {e.rows}")
        U = np.array(U, dtype=float)
        U[e.rows] = rng.standard_normal((len(e.rows), U.shape[1]))
        return project_rows_to_sphere(U)


# ---------------------------------------------------------------------------
# Iterations
# ---------------------------------------------------------------------------

def _update_block(params: ModelParams, block: str, grad: np.ndarray, eta: float, s: int,
                  rng: np.random.Generator) -> ModelParams:
    if block == "a":
        return params.with_blocks(a=params.a - eta * grad)
    if block == "W":
        return params.with_blocks(W=truncate(params.W - eta * grad, s))
    return params.with_blocks(U=_project_or_reseed(params.U - eta * grad, rng))


def pgd_step(params: ModelParams, net: MultiEdgeNetwork, mask: Optional[ObservationMask], steps: Steps, s: int,
             rng: Union[int, np.random.Generator] = 0, stats: Optional[PairStatistics] = None) -> ModelParams:
    """
    One projected gradient step with all three gradients taken at ``params``.

    :param steps: (eta_a, eta_W, eta_U)
    :param rng: seed or generator for re-randomizing degenerate rows of U
    :param stats: precomputed statistics of (net, mask), reused across iterations
    """
    eta_a, eta_W, eta_U = steps
    if min(eta_a, eta_W, eta_U) <= 0:
        raise ValueError("step sizes must be positive")
    rng = make_rng(rng)
    if stats is None:
        stats = PairStatistics.from_mask(net, mask)
    grad_a, grad_W, grad_U = stats.gradients(params)
    return ModelParams(
        params.a - eta_a * grad_a,
        truncate(params.W - eta_W * grad_W, s),
        _project_or_reseed(params.U - eta_U * grad_U, rng),
    )


def _backtracking_step(stats: PairStatistics, params: ModelParams, objective: float, s: int,
                       rule: Backtracking, rng: np.random.Generator) -> Tuple[ModelParams, float, Steps]:
    grads = dict(zip("aWU", stats.gradients(params)))
    current, current_obj = params, objective
    accepted_steps = []
    for block in "aWU":
        eta = rule.initial_step
        accepted = None
        for _ in range(rule.max_backtracks):
            candidate = _update_block(current, block, grads[block], eta, s, rng)
            cand_obj = stats.objective(candidate)
            mapping = (getattr(current, block) - getattr(candidate, block)) / eta
            bound = current_obj - rule.sufficient_decrease * eta * float(np.sum(mapping ** 2))
            if np.isfinite(cand_obj) and cand_obj <= bound:
                accepted = (candidate, cand_obj)
                break
            eta *= rule.shrink
        if accepted is None:
            logger.debug(f"No acceptable step for block {block}; keeping it")
            accepted_steps.append(0.0)
            continue
        current, current_obj = accepted
        accepted_steps.append(eta)
    return current, current_obj, tuple(accepted_steps)


def fit(net: MultiEdgeNetwork, mask: Optional[ObservationMask], config: FitConfig, init: ModelParams,
        truth: Optional[ModelParams] = None) -> FitReport:
    """
    Run projected gradient descent from ``init`` until the relative objective
    change drops below ``config.tol`` or ``config.max_iters`` is reached.

    When ``truth`` is given the error e_t of every iterate is recorded.
    """
    config.validate(net.n, net.K)
    if init.n != net.n or init.K != net.K or init.d != config.d:
        raise ValueError("initial parameters do not match the network and latent dimension")
    stats = PairStatistics.from_mask(net, mask)
    rng = make_rng(config.seed)
    started = time.perf_counter()

    track = None
    if truth is not None:
        sigma1 = float(np.linalg.svd(truth.U, compute_uv=False)[0])
        wmax = float(truth.W.max())

        def track(p: ModelParams) -> float:
            return error_metric_et(p, truth, sigma1, wmax)

    params = init
    objective = stats.objective(params)
    report = FitReport(params, [objective], [], False, 0, [track(params)] if track else None)
    if not np.isfinite(objective):
        raise DivergenceError(0, report)

    logger.info(f"Fitting d={config.d}, s={config.s} on {stats.observed.sum():.0f} weighted cells")
    for t in range(1, config.max_iters + 1):
        if isinstance(config.step_mode, FixedSteps):
            steps = config.step_mode.steps
            new_params = pgd_step(params, net, mask, steps, config.s, rng=rng, stats=stats)
            new_objective = stats.objective(new_params)
        else:
            new_params, new_objective, steps = _backtracking_step(
                stats, params, objective, config.s, config.step_mode, rng
            )
        if not np.isfinite(new_objective):
            report.iterations = t
            report.elapsed = time.perf_counter() - started
            raise DivergenceError(t, report)

        change = abs(new_objective - objective) / max(1.0, abs(objective))
        params, objective = new_params, new_objective
        report.params = params
        report.objective.append(objective)
        report.steps.append(steps)
        report.iterations = t
        if track:
            report.error_trace.append(track(params))
        logger.debug(f"iter {t}: objective={objective:.10g} steps={steps}")
        if change < config.tol:
            report.converged = True
            break

    report.elapsed = time.perf_counter() - started
    if report.converged:
        logger.info(f"Converged after {report.iterations} iterations (objective {objective:.6g})")
    else:
        logger.warning(f"Stopped at max_iters={config.max_iters} without meeting tol={config.tol}")
    return report


# ---------------------------------------------------------------------------
# Step sizes and initialization
# ---------------------------------------------------------------------------

def theoretical_steps(sigma1: float, wmax: float, K: int, n: int, M1: float, kappa0: float,
                      rho: float) -> Steps:
    """
    Step sizes that guarantee linear convergence:

        eta_a = eta / (4 K n)
        eta_W = eta / (4 sigma1^2 wmax^2)
        eta_U = eta / (2 K sigma1^2 wmax^4)

    with eta = kappa0^2 (16 - rho) e^M1 / 4.
    """
    if min(sigma1, wmax, kappa0) <= 0 or K < 1 or n < 1 or M1 < 0:
        raise ValueError("sigma1, wmax, kappa0, K and n must be positive and M1 nonnegative")
    if not 0 <= rho < 0.5:
        raise ValueError(f"contraction rate rho must lie in [0, 1/2), got {rho}")
    eta = kappa0 ** 2 * (16 - rho) * np.exp(M1) / 4
    return (
        float(eta / (4 * K * n)),
        float(eta / (4 * sigma1 ** 2 * wmax ** 2)),
        float(eta / (2 * K * sigma1 ** 2 * wmax ** 4)),
    )


def initialize_svt(net: MultiEdgeNetwork, d: int, s: int, mask: Optional[ObservationMask] = None, seed: int = 0,
                   weight_scale: str = DEFAULT_WEIGHT_SCALE) -> ModelParams:
    """
    Spectral starting point built from pooled pair-level logits.

    1. pooled probabilities per pair, clipped to [1/(2nK), 1 - 1/(2nK)]
    2. M = logit of those, zero diagonal
    3. a0 = least-squares fit of M_ij ~ a_i + a_j over i < j
    4. top-d eigenpairs of the residual give U0 (rows normalized)
    5. flat W0 from the mean kept eigenvalue, truncated to s entries

    ``weight_scale="row-norm"`` (the default) sets W0 to the root-mean-square
    row norm of the spectral embedding, sqrt(mean eigenvalue * d / n), which
    stays bounded in n. ``"eigenvalue"`` uses sqrt(mean eigenvalue); it grows
    like sqrt(n) and overshoots the true weights on larger networks.
    """
    n, K = net.n, net.K
    if not 1 <= d <= n:
        raise ValueError(f"latent dimension d={d} must satisfy 1 <= d <= n={n}")
    if weight_scale not in WEIGHT_SCALES:
        raise ValueError(f"unknown weight_scale {weight_scale!r}")
    rng = make_rng(seed)
    stats = PairStatistics.from_mask(net, mask)

    observed = stats.observed.sum(axis=1)
    positive = stats.positive.sum(axis=1)
    overall = positive.sum() / observed.sum() if observed.sum() > 0 else 0.5
    pooled = np.full(net.n_pairs, overall)
    seen = observed > 0
    pooled[seen] = positive[seen] / observed[seen]
    eps = 1.0 / (2 * n * K)
    pooled = np.clip(pooled, eps, 1 - eps)

    M = np.zeros((n, n))
    M[net.pair_i, net.pair_j] = logit(pooled)
    M = M + M.T
    rowsums = M.sum(axis=1)
    if n > 2:
        a0 = (rowsums - rowsums.sum() / (2 * n - 2)) / (n - 2)
    else:
        system = (n - 2) * np.eye(n) + np.ones((n, n))
        a0 = np.linalg.lstsq(system, rowsums, rcond=None)[0]

    R = M - a0[:, None] - a0[None, :]
    np.fill_diagonal(R, 0.0)
    evals, evecs = eigh(R)
    top = np.argsort(evals)[::-1][:d]
    lam, V = evals[top], evecs[:, top]
    kept = lam > 1e-10 * max(1.0, float(np.linalg.norm(R)))

    U0 = np.zeros((n, d))
    U0[:, kept] = V[:, kept] * np.sqrt(lam[kept])
    if not kept.all():
        logger.info(f"Only {int(kept.sum())} of {d} leading eigenvalues are positive; filling the rest at random")
        scale = np.sqrt(lam[kept].mean() / n) if kept.any() else 1.0
        U0[:, ~kept] = rng.standard_normal((n, int((~kept).sum()))) * scale
    U0 = _project_or_reseed(U0, rng)

    lam_mean = float(lam[kept].mean()) if kept.any() else 0.0
    level = max(lam_mean, 0.0)
    if weight_scale == "row-norm":
        level *= d / n
    W0 = truncate(np.full((n, K), np.sqrt(level)), s)
    return ModelParams(a0, W0, U0)
