"""
Coordinates for external plotting: latent positions, preferential positions
W_ik * u_i and grouped summaries of the preference weights.
"""
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .fileio import FormatError
from .metrics import procrustes_distance
from .model import ModelParams, preferential_positions


def align_positions(U: np.ndarray, reference: np.ndarray) -> Tuple[np.ndarray, float]:
    """Rotate U onto ``reference``; returns the rotated rows and the remaining distance."""
    dist, R = procrustes_distance(reference, U)
    return np.asarray(U) @ R, dist


def aligned(params: ModelParams, reference: Optional[ModelParams] = None) -> ModelParams:
    if reference is None:
        return params
    if reference.n != params.n or reference.d != params.d:
        raise ValueError(
            f"reference (n={reference.n}, d={reference.d}) does not match model (n={params.n}, d={params.d})"
        )
    U, _ = align_positions(params.U, reference.U)
    return ModelParams.raw(params.a, params.W, U)


def _position_columns(d: int, prefix: str = "x"):
    return [f"{prefix}{c + 1}" for c in range(d)]


def positions_frame(params: ModelParams, reference: Optional[ModelParams] = None) -> pd.DataFrame:
    params = aligned(params, reference)
    frame = pd.DataFrame(params.U, columns=_position_columns(params.d))
    frame.insert(0, "node", np.arange(params.n))
    frame.insert(1, "a", params.a)
    return frame


def preferential_frame(params: ModelParams, topics: Sequence[int],
                       reference: Optional[ModelParams] = None) -> pd.DataFrame:
    """Long table (node, topic, weight, x1..xd) of W_ik * u_i for the requested topics."""
    params = aligned(params, reference)
    frames = []
    for k in topics:
        frame = pd.DataFrame(preferential_positions(params, k), columns=_position_columns(params.d))
        frame.insert(0, "node", np.arange(params.n))
        frame.insert(1, "topic", int(k))
        frame.insert(2, "weight", params.W[:, k])
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def read_groups(path: Union[str, Path], n: int) -> pd.Series:
    """Node-group CSV with columns node,group; returns group labels indexed by node."""
    frame = pd.read_csv(path)
    if list(frame.columns[:2]) != ["node", "group"]:
        raise FormatError(path, 1, "expected columns node,group")
    if frame["node"].duplicated().any():
        raise FormatError(path, 1, "a node is listed twice")
    if not frame["node"].between(0, n - 1).all():
        raise FormatError(path, 1, f"node ids must lie in [0, {n})")
    return frame.set_index("node")["group"]


def group_weight_summary(params: ModelParams, groups: pd.Series) -> pd.DataFrame:
    """Per group and topic: size, mean, first and third quartile of W_ik."""
    weights = pd.DataFrame(params.W[groups.index.to_numpy()], index=groups.index)
    weights["group"] = groups
    long = weights.melt(id_vars="group", var_name="topic", value_name="weight")
    summary = long.groupby(["group", "topic"])["weight"].agg(
        size="size",
        mean="mean",
        q1=lambda w: w.quantile(0.25),
        q3=lambda w: w.quantile(0.75),
    )
    return summary.reset_index()
