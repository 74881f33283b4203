"""
Preferential latent space model: parameters, network containers and the
weighted logistic likelihood with its analytic gradients.

Pairs are always enumerated in row-major upper-triangular order, the order of
``np.triu_indices(n, 1)``; documents of a pair are stored contiguously.
"""
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Tuple

import numpy as np
from scipy.special import expit

UNIT_NORM_TOL = 1e-10


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow for large |x|."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    The triple (a, W, U).

    a: node baseline effects, shape (n,)
    W: nonnegative node-topic preference weights, shape (n, K)
    U: latent positions on the unit sphere, shape (n, d)

    Use ``ModelParams.raw`` to build a triple that skips the sphere and
    nonnegativity checks (diagnostics, finite differences).
    """
    a: np.ndarray
    W: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        W = np.array(self.W, dtype=float, ndmin=2)
        U = np.array(self.U, dtype=float, ndmin=2)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "U", U)
        if W.ndim != 2 or U.ndim != 2:
            raise ValueError("W and U must be matrices")
        if not (a.shape[0] == W.shape[0] == U.shape[0]):
            raise ValueError(
                f"inconsistent node counts: a has {a.shape[0]}, W has {W.shape[0]} rows, U has {U.shape[0]} rows"
            )
        if getattr(self, "_unchecked", False):
            return
        if np.any(W < 0):
            raise ValueError("W must be nonnegative")
        norms = np.linalg.norm(U, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("every row of U must have unit Euclidean norm")

    @classmethod
    def raw(cls, a, W, U) -> "ModelParams":
        """Build parameters checking only that the dimensions agree."""
        obj = cls.__new__(cls)
        object.__setattr__(obj, "_unchecked", True)
        object.__setattr__(obj, "a", a)
        object.__setattr__(obj, "W", W)
        object.__setattr__(obj, "U", U)
        obj.__post_init__()
        return obj

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def K(self) -> int:
        return self.W.shape[1]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def with_blocks(self, a=None, W=None, U=None) -> "ModelParams":
        """Copy with some blocks replaced; the copy keeps this object's checking mode."""
        blocks = (
            self.a if a is None else a,
            self.W if W is None else W,
            self.U if U is None else U,
        )
        if getattr(self, "_unchecked", False):
            return ModelParams.raw(*blocks)
        return ModelParams(*blocks)


@dataclass(frozen=True, eq=False)
class MultiEdgeNetwork:
    """
    A generalized multi-layer network.

    ``counts[p]`` is m_ij for the p-th pair (i < j, row-major), and the rows
    ``Y[offsets[p]:offsets[p + 1]]`` are that pair's documents, one binary
    column per topic. Every pair is present; a pair without exchanges holds a
    single all-zero row.
    """
    n: int
    K: int
    counts: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        n, K = int(self.n), int(self.K)
        if n < 2 or K < 1:
            raise ValueError("a network needs n >= 2 nodes and K >= 1 topics")
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        Y = np.asarray(self.Y)
        n_pairs = n * (n - 1) // 2
        if counts.shape[0] != n_pairs:
            raise ValueError(f"expected {n_pairs} pair counts, got {counts.shape[0]}")
        if np.any(counts < 1):
            raise ValueError("every pair needs at least one row (m_ij >= 1)")
        if Y.ndim != 2 or Y.shape != (int(counts.sum()), K):
            raise ValueError(f"Y must have shape ({int(counts.sum())}, {K}), got {Y.shape}")
        if Y.size and not np.all((Y == 0) | (Y == 1)):
            raise ValueError("edge indicators must be 0 or 1")
        Y = Y.astype(np.uint8)
        Y.setflags(write=False)
        offsets = np.concatenate(([0], np.cumsum(counts)))
        pair_i, pair_j = np.triu_indices(n, 1)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "pair_i", pair_i)
        object.__setattr__(self, "pair_j", pair_j)
        object.__setattr__(self, "doc_pair", np.repeat(np.arange(n_pairs), counts))

    @classmethod
    def from_pairs(cls, n: int, K: int, blocks: Mapping[Tuple[int, int], np.ndarray]) -> "MultiEdgeNetwork":
        """
        Build a network from a mapping ``(i, j) -> Y_ij``.

        Pairs missing from the mapping get a single all-zero row.
        """
        n_pairs = n * (n - 1) // 2
        stacks = [None] * n_pairs
        for (i, j), block in blocks.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-pair ({i}, {i}) is not allowed")
            if i > j:
                i, j = j, i
            if not (0 <= i and j < n):
                raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
            p = pair_index(n, i, j)
            if stacks[p] is not None:
                raise ValueError(f"pair ({i}, {j}) given twice")
            block = np.array(block, ndmin=2)
            if block.shape[1] != K or block.shape[0] < 1:
                raise ValueError(f"pair ({i}, {j}) needs an m x {K} block with m >= 1")
            stacks[p] = block
        zero = np.zeros((1, K), dtype=np.uint8)
        stacks = [zero if s is None else s for s in stacks]
        counts = np.array([s.shape[0] for s in stacks], dtype=np.int64)
        return cls(n, K, counts, np.vstack(stacks))

    @property
    def n_pairs(self) -> int:
        return self.counts.shape[0]

    @property
    def n_rows(self) -> int:
        return self.Y.shape[0]

    @property
    def n_cells(self) -> int:
        return self.Y.size

    def pair_index(self, i: int, j: int) -> int:
        return pair_index(self.n, i, j)

    def block(self, i: int, j: int) -> np.ndarray:
        """Y_ij, the m_ij x K stack of documents between i and j."""
        p = self.pair_index(i, j)
        return self.Y[self.offsets[p]:self.offsets[p + 1]]

    def row_index(self, i: int, j: int, l: int) -> int:
        p = self.pair_index(i, j)
        if not 0 <= l < self.counts[p]:
            raise IndexError(f"document {l} out of range for pair ({i}, {j}) with m={self.counts[p]}")
        return int(self.offsets[p] + l)

    def row_coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, l) for every stored row."""
        p = self.doc_pair
        l = np.arange(self.n_rows) - self.offsets[p]
        return self.pair_i[p], self.pair_j[p], l

    def iter_pairs(self) -> Iterator[Tuple[int, int, np.ndarray]]:
        for p in range(self.n_pairs):
            yield int(self.pair_i[p]), int(self.pair_j[p]), self.Y[self.offsets[p]:self.offsets[p + 1]]

    def density(self) -> float:
        return float(self.Y.mean())

    def same_as(self, other: "MultiEdgeNetwork") -> bool:
        return (
            self.n == other.n and self.K == other.K
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.Y, other.Y)
        )


def pair_index(n: int, i: int, j: int) -> int:
    """Position of the unordered pair {i, j} in row-major upper-triangular order."""
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-pair ({i}, {i}) has no index")
    if i > j:
        i, j = j, i
    if i < 0 or j >= n:
        raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


@dataclass(frozen=True, eq=False)
class ObservationMask:
    """
    Membership over the cells (i, j, l, k) of a network, stored as a boolean
    array aligned with ``MultiEdgeNetwork.Y`` (row = stored document, column = topic).
    """
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim != 2:
            raise ValueError("mask cells must be a 2-d boolean array")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def full(cls, net: MultiEdgeNetwork) -> "ObservationMask":
        return cls(np.ones(net.Y.shape, dtype=bool))

    @classmethod
    def empty(cls, net: MultiEdgeNetwork) -> "ObservationMask":
        return cls(np.zeros(net.Y.shape, dtype=bool))

    @classmethod
    def from_cells(cls, net: MultiEdgeNetwork, cells: Iterable[Tuple[int, int, int, int]]) -> "ObservationMask":
        out = np.zeros(net.Y.shape, dtype=bool)
        for i, j, l, k in cells:
            if not 0 <= k < net.K:
                raise IndexError(f"topic {k} out of range for K={net.K}")
            out[net.row_index(i, j, l), k] = True
        return cls(out)

    def to_cells(self, net: MultiEdgeNetwork) -> np.ndarray:
        """Member cells as an (N, 4) integer array of (i, j, l, k), row-major."""
        self.check(net)
        rows, ks = np.nonzero(self.cells)
        i, j, l = net.row_coordinates()
        return np.column_stack((i[rows], j[rows], l[rows], ks)).astype(np.int64)

    def check(self, net: MultiEdgeNetwork) -> None:
        if self.cells.shape != net.Y.shape:
            raise ValueError(f"mask shape {self.cells.shape} does not match network cells {net.Y.shape}")

    def complement(self) -> "ObservationMask":
        return ObservationMask(~self.cells)

    def intersects(self, other: "ObservationMask") -> bool:
        return bool(np.any(self.cells & other.cells))

    def __and__(self, other: "ObservationMask") -> "ObservationMask":
        return ObservationMask(self.cells & other.cells)

    def __or__(self, other: "ObservationMask") -> "ObservationMask":
        return ObservationMask(self.cells | other.cells)

    @property
    def count(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class ParameterSpaceCheck:
    """Which conditions of the bounded parameter space a triple satisfies."""
    M1: float
    C: float
    baseline_bounded: bool
    weights_bounded: bool
    weights_sparse: bool
    unit_rows: bool
    log_odds_bounded: bool
    max_log_odds: float
    max_abs_log_odds: float

    @property
    def passed(self) -> bool:
        return all((
            self.baseline_bounded,
            self.weights_bounded,
            self.weights_sparse,
            self.unit_rows,
            self.log_odds_bounded,
        ))


# ---------------------------------------------------------------------------
# Log-odds surface
# ---------------------------------------------------------------------------

def _check_index(value: int, bound: int, name: str) -> int:
    if not 0 <= value < bound:
        raise IndexError(f"{name} index {value} out of range [0, {bound})")
    return int(value)


def log_odds(params: ModelParams, i: int, j: int, k: int) -> float:
    """Lambda_ij^(k) = a_i + a_j + W_ik W_jk <u_i, u_j>."""
    i = _check_index(i, params.n, "node")
    j = _check_index(j, params.n, "node")
    k = _check_index(k, params.K, "topic")
    if i == j:
        raise ValueError("log-odds are defined for distinct nodes only")
    inner = float(np.dot(params.U[i], params.U[j]))
    return float(params.a[i] + params.a[j] + params.W[i, k] * params.W[j, k] * inner)


def edge_probability(params: ModelParams, i: int, j: int, k: int) -> float:
    return float(expit(log_odds(params, i, j, k)))


def pair_log_odds(params: ModelParams, pair_i: np.ndarray, pair_j: np.ndarray) -> np.ndarray:
    """Log-odds for a batch of pairs, shape (len(pair_i), K)."""
    inner = np.einsum("pd,pd->p", params.U[pair_i], params.U[pair_j])
    base = params.a[pair_i] + params.a[pair_j]
    return base[:, None] + params.W[pair_i] * params.W[pair_j] * inner[:, None]


def log_odds_matrix(params: ModelParams) -> np.ndarray:
    """Full (n, n, K) log-odds tensor with the self-pair diagonal set to zero."""
    gram = params.U @ params.U.T
    lam = (
        params.a[:, None, None] + params.a[None, :, None]
        + params.W[:, None, :] * params.W[None, :, :] * gram[:, :, None]
    )
    idx = np.arange(params.n)
    lam[idx, idx, :] = 0.0
    return lam


def preferential_positions(params: ModelParams, k: int) -> np.ndarray:
    """Rows W_ik * u_i for topic k; row lengths equal the weights."""
    k = _check_index(k, params.K, "topic")
    return params.W[:, k][:, None] * params.U


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PairStatistics:
    """
    Per-pair, per-topic sufficient statistics of a masked network.

    observed[p, k] = sum over masked documents l of 1 / m_ij
    positive[p, k] = sum over masked documents l of y_ijl^(k) / m_ij
    """
    n: int
    pair_i: np.ndarray
    pair_j: np.ndarray
    observed: np.ndarray
    positive: np.ndarray

    @classmethod
    def from_mask(cls, net: MultiEdgeNetwork, mask: Optional[ObservationMask] = None) -> "PairStatistics":
        if mask is None:
            mask = ObservationMask.full(net)
        mask.check(net)
        weights = mask.cells / net.counts[net.doc_pair][:, None]
        starts = net.offsets[:-1]
        observed = np.add.reduceat(weights, starts, axis=0)
        positive = np.add.reduceat(weights * net.Y, starts, axis=0)
        return cls(net.n, net.pair_i, net.pair_j, observed, positive)

    def objective(self, params: ModelParams) -> float:
        lam = pair_log_odds(params, self.pair_i, self.pair_j)
        return float(np.sum(self.observed * softplus(lam) - self.positive * lam))

    def residuals(self, params: ModelParams) -> np.ndarray:
        lam = pair_log_odds(params, self.pair_i, self.pair_j)
        return self.observed * expit(lam) - self.positive

    def gradients(self, params: ModelParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = self.residuals(params)
        n, K = params.n, params.K
        full = np.zeros((n, n, K))
        full[self.pair_i, self.pair_j] = r
        full[self.pair_j, self.pair_i] = r
        gram = params.U @ params.U.T
        grad_a = full.sum(axis=(1, 2))
        grad_W = np.einsum("ijk,jk,ij->ik", full, params.W, gram)
        grad_U = np.einsum("ijk,ik,jk->ij", full, params.W, params.W) @ params.U
        return grad_a, grad_W, grad_U


def neg_log_likelihood(params: ModelParams, net: MultiEdgeNetwork, mask: Optional[ObservationMask] = None) -> float:
    """
    Weighted negative log-likelihood over the masked cells:

        -sum (1/m_ij) [ y * Lambda - log(1 + e^Lambda) ]

    summed over i < j, documents l and topics k.
    """
    _check_dims(params, net)
    return PairStatistics.from_mask(net, mask).objective(params)


def gradients(params: ModelParams, net: MultiEdgeNetwork, mask: Optional[ObservationMask] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients (grad_a, grad_W, grad_U) of ``neg_log_likelihood``."""
    _check_dims(params, net)
    return PairStatistics.from_mask(net, mask).gradients(params)


def _check_dims(params: ModelParams, net: MultiEdgeNetwork) -> None:
    if params.n != net.n or params.K != net.K:
        raise ValueError(
            f"parameters (n={params.n}, K={params.K}) do not match network (n={net.n}, K={net.K})"
        )


# ---------------------------------------------------------------------------
# Parameter space
# ---------------------------------------------------------------------------

def check_parameter_space(params: ModelParams, M1: float, C: float) -> ParameterSpaceCheck:
    """
    Evaluate each condition of the bounded parameter space independently.

    :param params: the triple to check (may be built with ``ModelParams.raw``)
    :param M1: overall log-odds bound, >= 0
    :param C: slack constant in (0, 1)
    """
    if not 0 < C < 1:
        raise ValueError(f"C must lie in (0, 1), got {C}")
    if M1 < 0:
        raise ValueError(f"M1 must be nonnegative, got {M1}")
    n, K = params.n, params.K
    pi, pj = np.triu_indices(n, 1)
    lam = pair_log_odds(params, pi, pj)
    max_lam = float(lam.max()) if lam.size else float("-inf")
    max_abs = float(np.abs(lam).max()) if lam.size else 0.0
    norms = np.linalg.norm(params.U, axis=1)
    return ParameterSpaceCheck(
        M1=float(M1),
        C=float(C),
        baseline_bounded=bool(np.max(np.abs(params.a)) <= M1 / 4),
        weights_bounded=bool(np.max(np.sum(params.W ** 2, axis=1)) <= M1 / 2),
        weights_sparse=bool(np.count_nonzero(params.W) < n * K),
        unit_rows=bool(np.all(np.abs(norms - 1.0) <= UNIT_NORM_TOL)),
        log_odds_bounded=bool(max_lam <= -(1 - C) * M1),
        max_log_odds=max_lam,
        max_abs_log_odds=max_abs,
    )
