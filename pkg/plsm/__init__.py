from .model import ModelParams, MultiEdgeNetwork, ObservationMask, neg_log_likelihood, gradients
from .optimizer import FitConfig, fit, initialize_svt
from .simulate import SimConfig, simulate
from .tuning import cross_validate

__version__ = "0.1.0"
