from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.special import expit

from .model import ModelParams, MultiEdgeNetwork, pair_log_odds
from .utils import derive_seed, make_rng

# nominal edge density -> baseline range (a_l, a_u)
DENSITY_SETTINGS: Dict[float, Tuple[float, float]] = {
    0.04: (-3.5, -1.8),
    0.08: (-3.0, -1.0),
    0.12: (-2.0, -1.0),
    0.16: (-1.4, -0.9),
}


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    K: int = 10
    d: int = 2
    m: int = 1
    q0: float = 0.7
    a_range: Tuple[float, float] = (-3.0, -1.0)
    w_range: Tuple[float, float] = (0.5, 3.5)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "a_range", tuple(float(v) for v in self.a_range))
        object.__setattr__(self, "w_range", tuple(float(v) for v in self.w_range))
        if self.n < 2 or self.K < 1 or not 1 <= self.d <= self.n:
            raise ValueError("need n >= 2, K >= 1 and 1 <= d <= n")
        if not 0 < self.q0 <= 1:
            raise ValueError(f"q0 must lie in (0, 1], got {self.q0}")
        if not self.a_range[0] < self.a_range[1]:
            raise ValueError(f"baseline range must satisfy a_l < a_u, got {self.a_range}")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @classmethod
    def from_density(cls, density: float, **kwargs) -> "SimConfig":
        """Config whose baseline range gives one of the nominal densities."""
        try:
            a_range = DENSITY_SETTINGS[round(float(density), 2)]
        except KeyError:
            raise ValueError(f"no baseline range for density {density}; choose from {sorted(DENSITY_SETTINGS)}")
        return cls(a_range=a_range, **kwargs)

    @property
    def nonzeros(self) -> int:
        return int(round(self.q0 * self.n * self.K))


def gen_params(cfg: SimConfig) -> ModelParams:
    """
    Ground truth drawn from one stream in the order: a, U, W support, W values.
    """
    rng = make_rng(cfg.seed)
    a = rng.uniform(cfg.a_range[0], cfg.a_range[1], size=cfg.n)
    U = rng.standard_normal((cfg.n, cfg.d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    support = rng.choice(cfg.n * cfg.K, size=cfg.nonzeros, replace=False)
    values = rng.uniform(cfg.w_range[0], cfg.w_range[1], size=cfg.nonzeros)
    W = np.zeros(cfg.n * cfg.K)
    W[support] = values
    return ModelParams(a, W.reshape(cfg.n, cfg.K), U)


def gen_network(truth: ModelParams, m: int, seed: int) -> MultiEdgeNetwork:
    """Draw m documents per pair, edges sampled pair by pair, document by document, topic by topic."""
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = make_rng(seed)
    n, K = truth.n, truth.K
    pi, pj = np.triu_indices(n, 1)
    probs = expit(pair_log_odds(truth, pi, pj))
    draws = rng.random((pi.shape[0], m, K))
    Y = (draws < probs[:, None, :]).astype(np.uint8).reshape(-1, K)
    return MultiEdgeNetwork(n, K, np.full(pi.shape[0], m), Y)


def simulate(cfg: SimConfig) -> Tuple[ModelParams, MultiEdgeNetwork]:
    """Truth and network for one replication; the network stream is seeded from the config seed."""
    truth = gen_params(cfg)
    network_seed = derive_seed(cfg.seed, 1)
    return truth, gen_network(truth, cfg.m, network_seed)
