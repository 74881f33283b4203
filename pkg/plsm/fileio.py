"""
Plain-text file formats.

Network file::

    plsm-network 1
    n <n> K <K>
    pair <i> <j> <m>
    <K space-separated 0/1 digits>      (m lines)
    ...

Pairs that are absent read back as a single all-zero row.

Model file::

    plsm-model 1
    n <n> K <K> d <d>
    meta <one-line JSON>
    a <n values>
    W <count>
    <i> <k> <value>                     (count lines, value > 0)
    U
    <d values>                          (n lines)

Floats are written with ``repr`` so files read back bit-exactly.
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from .model import ModelParams, MultiEdgeNetwork, ObservationMask
from .utils import PlsmError, logger

NETWORK_MAGIC = "plsm-network"
MODEL_MAGIC = "plsm-model"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


class FormatError(PlsmError, ValueError):
    """A file does not follow the expected format."""

    def __init__(self, path: PathLike, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def _fmt(x: float) -> str:
    return repr(float(x))


def _lines(path: PathLike):
    with open(path) as f:
        for number, line in enumerate(f, 1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield number, line.split()


def _expect_header(path, lines, magic: str) -> None:
    try:
        number, tokens = next(lines)
    except StopIteration:
        raise FormatError(path, 0, "empty file")
    if len(tokens) != 2 or tokens[0] != magic:
        raise FormatError(path, number, f"expected header '{magic} {FORMAT_VERSION}'")
    if tokens[1] != str(FORMAT_VERSION):
        raise FormatError(path, number, f"unsupported format version {tokens[1]}")


def _keyed_ints(path, number: int, tokens, keys) -> Dict[str, int]:
    if len(tokens) != 2 * len(keys) or tokens[0::2] != list(keys):
        raise FormatError(path, number, f"expected '{' '.join(k + ' <int>' for k in keys)}'")
    try:
        return {k: int(v) for k, v in zip(keys, tokens[1::2])}
    except ValueError:
        raise FormatError(path, number, "dimensions must be integers")


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------

def write_network(net: MultiEdgeNetwork, path: PathLike, skip_empty: bool = True) -> None:
    """Write a network; single all-zero pairs are omitted unless ``skip_empty`` is False."""
    with open(path, "w") as f:
        f.write(f"{NETWORK_MAGIC} {FORMAT_VERSION}\n")
        f.write(f"n {net.n} K {net.K}\n")
        for i, j, block in net.iter_pairs():
            if skip_empty and block.shape[0] == 1 and not block.any():
                continue
            f.write(f"pair {i} {j} {block.shape[0]}\n")
            for row in block:
                f.write(" ".join(str(int(v)) for v in row) + "\n")
    logger.debug(f"Wrote network n={net.n}, K={net.K} to {path}")


def read_network(path: PathLike) -> MultiEdgeNetwork:
    lines = _lines(path)
    _expect_header(path, lines, NETWORK_MAGIC)
    try:
        number, tokens = next(lines)
    except StopIteration:
        raise FormatError(path, 1, "missing dimension line")
    dims = _keyed_ints(path, number, tokens, ("n", "K"))
    n, K = dims["n"], dims["K"]

    blocks = {}
    current, rows, expected, start = None, [], 0, 0
    for number, tokens in lines:
        if tokens[0] == "pair":
            if current is not None and len(rows) != expected:
                raise FormatError(path, start, f"pair {current} declares {expected} rows, found {len(rows)}")
            if len(tokens) != 4:
                raise FormatError(path, number, "expected 'pair <i> <j> <m>'")
            try:
                i, j, m = (int(t) for t in tokens[1:])
            except ValueError:
                raise FormatError(path, number, "pair indices must be integers")
            if not 0 <= i < j < n:
                raise FormatError(path, number, f"pair ({i}, {j}) must satisfy 0 <= i < j < {n}")
            if m < 1:
                raise FormatError(path, number, "a pair needs at least one row")
            if (i, j) in blocks:
                raise FormatError(path, number, f"pair ({i}, {j}) appears twice")
            current, rows, expected, start = (i, j), [], m, number
            blocks[current] = rows
            continue
        if current is None:
            raise FormatError(path, number, "edge row before any pair record")
        if len(tokens) != K or any(t not in ("0", "1") for t in tokens):
            raise FormatError(path, number, f"expected {K} binary digits")
        if len(rows) == expected:
            raise FormatError(path, number, f"pair {current} has more than {expected} rows")
        rows.append([int(t) for t in tokens])
    if current is not None and len(rows) != expected:
        raise FormatError(path, start, f"pair {current} declares {expected} rows, found {len(rows)}")

    blocks = {pair: np.array(rows, dtype=np.uint8) for pair, rows in blocks.items()}
    return MultiEdgeNetwork.from_pairs(n, K, blocks)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def write_model(params: ModelParams, path: PathLike, meta: Optional[Dict[str, Any]] = None) -> None:
    with open(path, "w") as f:
        f.write(f"{MODEL_MAGIC} {FORMAT_VERSION}\n")
        f.write(f"n {params.n} K {params.K} d {params.d}\n")
        f.write("meta " + json.dumps(meta or {}, sort_keys=True) + "\n")
        f.write("a " + " ".join(_fmt(v) for v in params.a) + "\n")
        rows, cols = np.nonzero(params.W)
        f.write(f"W {rows.size}\n")
        for i, k in zip(rows, cols):
            f.write(f"{i} {k} {_fmt(params.W[i, k])}\n")
        f.write("U\n")
        for row in params.U:
            f.write(" ".join(_fmt(v) for v in row) + "\n")


def read_model(path: PathLike) -> Tuple[ModelParams, Dict[str, Any]]:
    """Read a model file; returns the parameters and the metadata mapping."""
    with open(path) as f:
        content = [(number, line.strip()) for number, line in enumerate(f, 1)
                   if line.strip() and not line.startswith("#")]
    _expect_header(path, ((number, line.split()) for number, line in content), MODEL_MAGIC)
    if len(content) < 5:
        raise FormatError(path, content[-1][0], "truncated model file")

    def record(index: int, keyword: str, count: Optional[int] = None):
        if index >= len(content):
            raise FormatError(path, content[-1][0], f"missing '{keyword}' record")
        number, line = content[index]
        tokens = line.split()
        if tokens[0] != keyword or (count is not None and len(tokens) != count + 1):
            raise FormatError(path, number, f"expected '{keyword}' record")
        return number, tokens[1:]

    def floats(number: int, tokens, count: int):
        if len(tokens) != count:
            raise FormatError(path, number, f"expected {count} values, found {len(tokens)}")
        try:
            return [float(t) for t in tokens]
        except ValueError:
            raise FormatError(path, number, "values must be real numbers")

    number, line = content[1]
    dims = _keyed_ints(path, number, line.split(), ("n", "K", "d"))
    n, K, d = dims["n"], dims["K"], dims["d"]

    number, line = content[2]
    if not line.startswith("meta "):
        raise FormatError(path, number, "expected 'meta <json>'")
    try:
        meta = json.loads(line[len("meta "):])
    except json.JSONDecodeError as e:
        raise FormatError(path, number, f"invalid metadata JSON: {e}")

    number, tokens = record(3, "a")
    a = np.array(floats(number, tokens, n))

    number, tokens = record(4, "W", 1)
    count = int(tokens[0])
    W = np.zeros((n, K))
    for number, line in content[5:5 + count]:
        tokens = line.split()
        if len(tokens) != 3:
            raise FormatError(path, number, "expected '<i> <k> <value>'")
        i, k, value = int(tokens[0]), int(tokens[1]), float(tokens[2])
        if not (0 <= i < n and 0 <= k < K) or not value > 0:
            raise FormatError(path, number, f"invalid weight triplet ({i}, {k}, {value})")
        W[i, k] = value

    record(5 + count, "U", 0)
    rows = content[6 + count:6 + count + n]
    if len(rows) != n:
        raise FormatError(path, content[-1][0], f"expected {n} rows of U")
    U = np.array([floats(number, line.split(), d) for number, line in rows]).reshape(n, d)
    return ModelParams(a, W, U), meta


# ---------------------------------------------------------------------------
# Cell tables
# ---------------------------------------------------------------------------

CELL_COLUMNS = ["i", "j", "l", "k"]
PREDICTION_COLUMNS = CELL_COLUMNS + ["prob"]


def write_mask(mask: ObservationMask, net: MultiEdgeNetwork, path: PathLike) -> None:
    pd.DataFrame(mask.to_cells(net), columns=CELL_COLUMNS).to_csv(path, index=False)


def read_mask(path: PathLike, net: MultiEdgeNetwork) -> ObservationMask:
    frame = pd.read_csv(path)
    if list(frame.columns[:4]) != CELL_COLUMNS:
        raise FormatError(path, 1, f"expected columns {','.join(CELL_COLUMNS)}")
    try:
        return ObservationMask.from_cells(net, frame[CELL_COLUMNS].itertuples(index=False, name=None))
    except (IndexError, ValueError) as e:
        raise FormatError(path, 1, f"cell outside the network: {e}")


def write_predictions(cells: np.ndarray, probs: np.ndarray, path: PathLike) -> None:
    frame = pd.DataFrame(cells, columns=CELL_COLUMNS)
    frame["prob"] = probs
    frame.to_csv(path, index=False)


def read_predictions(path: PathLike) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns) != PREDICTION_COLUMNS:
        raise FormatError(path, 1, f"expected columns {','.join(PREDICTION_COLUMNS)}")
    return frame


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def load_config(path: Optional[PathLike]) -> Dict[str, Any]:
    """Load a YAML config of per-subcommand sections; no path means no config."""
    if path is None:
        return {}
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
        raise FormatError(path, 1, "config must be a mapping of section name to key-value mapping")
    return data


def resolve_options(section: str, config: Dict[str, Any], flags: Dict[str, Any],
                    defaults: Dict[str, Any]) -> Dict[str, Any]:
    """
    Merge option sources; later ones win:
    defaults < config['common'] < config[section] < flags that were given.
    """
    merged = dict(defaults)
    for source in (config.get("common", {}), config.get(section, {})):
        merged.update({k.replace("-", "_"): v for k, v in source.items()})
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged
