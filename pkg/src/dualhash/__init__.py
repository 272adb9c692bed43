"""Stochastic primal-dual optimization for learning binary hash codes.

The solver family splits the W-regularized training objective with auxiliary
codes, moves the nonconvex binarization penalty into the dual through its
Fenchel conjugate, and runs closed-form proximal dual updates next to
momentum or recursive-momentum network updates.
"""

from .data import Dataset, build_pairs, gen_gaussian_clusters
from .exceptions import (
    ConfigError,
    DimensionError,
    DivergenceError,
    DomainError,
    DualInfeasibleError,
)
from .metrics import RetrievalReport, evaluate_retrieval
from .model import MlpSpec, PairwiseLossSpec, binarize, forward, init_params
from .numerics import Rng, axpy, frob_norm_sq, sample_indices
from .optimizer import (
    BaselineParams,
    LyapunovConfig,
    RunResult,
    StoMParams,
    StoRMParams,
    lyapunov_value,
    run,
    run_baseline,
)
from .problem import (
    HashingProblem,
    LinearDecoupledProblem,
    StationarityBreakdown,
    dual_increment_bound_check,
)
from .regularizer import (
    Interval,
    WRegularizer,
    WeaklyConvexRegularizer,
    h_conj_value,
    h_value,
    logcosh_reg,
    prox_conj,
    prox_h,
    prox_oracle,
    prox_wc,
    subdiff_conj,
    wc_reg_value,
)

__version__ = "0.1.0"
