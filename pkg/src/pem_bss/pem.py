"""Online predictive entropy maximization.

The algorithm streams mixture samples one at a time.  For each sample a fast
inner loop relaxes the output activity y against statistics frozen at the
end of the previous sample (variance traces v, cross-covariance traces c,
running mean mu, separator W); the slow stage then takes one error-driven
step on W and refreshes the exponentially weighted statistics with the
settled output.

Two direction variants exist: the normalized form divides the lateral
(cross-covariance) term by both variance traces, the unnormalized form
replaces that normalization with a constant lateral coupling.  The
prediction-error term enters the direction as gamma_pred * (y - W x); this
gamma is the absorbed constant (the slow-timescale prefactor
2*lambda*(1-lambda) of the underlying objective gradient is folded into it),
which is also how the per-domain preset values are quoted.
"""

import dataclasses
import math
import struct
from typing import Optional

import numpy as np

from . import _kernels
from .domains import SourceDomain, contains
from .errors import InvalidInput, NumericalDivergence
from .streams import stream

_RULE_CODES = {
    "constant": _kernels.CONSTANT,
    "divide_by_index": _kernels.DIVIDE_BY_INDEX,
    "divide_by_log_index": _kernels.DIVIDE_BY_LOG_INDEX,
    "divide_by_loop_index": _kernels.DIVIDE_BY_LOOP_INDEX,
    "divide_by_slow_loop_index": _kernels.DIVIDE_BY_SLOW_LOOP_INDEX,
}

_DOMAIN_CODES = {
    SourceDomain.ANTISPARSE: _kernels.ANTISPARSE,
    SourceDomain.NN_ANTISPARSE: _kernels.NN_ANTISPARSE,
    SourceDomain.SPARSE: _kernels.SPARSE,
    SourceDomain.NN_SPARSE: _kernels.NN_SPARSE,
    SourceDomain.SIMPLEX: _kernels.SIMPLEX,
}

VARIANTS = ("normalized", "unnormalized")

# Feasibility slack for converged outputs: inequality constraints get 1e-4,
# the simplex sum equality a looser 1e-3 (the threshold unit only drives the
# sum toward one asymptotically).
_FEAS_TOL = 1e-4
_FEAS_SUM_TOL = 1e-3


@dataclasses.dataclass(frozen=True)
class StepSchedule:
    """Learning-rate schedule; `index` is the sample counter for the slow
    stage and the inner iteration for the fast stage."""

    rule: str
    base: float
    divider: float = 1.0
    floor: float = 0.0

    def __post_init__(self):
        if self.rule not in _RULE_CODES:
            raise InvalidInput(
                f"unknown schedule rule {self.rule!r} (expected: {', '.join(_RULE_CODES)})"
            )
        if not self.base > 0:
            raise InvalidInput("schedule base must be positive")
        if not self.divider > 0:
            raise InvalidInput("schedule divider must be positive")
        if self.floor < 0 or self.floor > self.base:
            raise InvalidInput("schedule floor must lie in [0, base]")

    def value(self, index):
        return schedule_value(self, index)


def schedule_value(s, index):
    """Evaluate a StepSchedule at a nonnegative integer index."""
    if index < 0:
        raise InvalidInput("schedule index must be nonnegative")
    return float(
        _kernels.schedule_eval(
            _RULE_CODES[s.rule], float(s.base), float(s.divider), float(s.floor), float(index)
        )
    )


@dataclasses.dataclass(frozen=True)
class InitSpec:
    """State initialization: W = w_scale * I + noise_scale * xi with xi
    standard normal; statistics start at C(0) = c0_scale * I ("identity"
    mode) or at the gram matrix G G^T of G = sqrt(c0_scale) * I + Z with
    Z entries N(0, 1/5) ("gram" mode, used by the surrogate diagnostics to
    start from substantial off-diagonal structure)."""

    w_mode: str = "identity"
    w_scale: float = 1.0
    noise_scale: float = 0.01
    c0_mode: str = "identity"
    c0_scale: float = 0.2
    mu0: float = 0.0

    def __post_init__(self):
        if self.w_mode != "identity":
            raise InvalidInput(f"unknown w_mode {self.w_mode!r}")
        if self.c0_mode not in ("identity", "gram"):
            raise InvalidInput(f"unknown c0_mode {self.c0_mode!r}")
        if not self.c0_scale > 0:
            raise InvalidInput("c0_scale must be positive")
        if self.noise_scale < 0:
            raise InvalidInput("noise_scale must be nonnegative")


@dataclasses.dataclass(frozen=True)
class PemConfig:
    n: int
    m: int
    domain: SourceDomain
    lam: float
    epsilon: float
    gamma_pred: float
    w_schedule: StepSchedule
    y_schedule: StepSchedule
    tau_max: int
    inner_tol: float
    variant: str = "normalized"
    gamma_lateral: Optional[float] = None
    eta_lambda: Optional[float] = None
    exact_normalization: bool = False
    warm_start_threshold: bool = False
    init: InitSpec = dataclasses.field(default_factory=InitSpec)

    def __post_init__(self):
        object.__setattr__(self, "domain", SourceDomain(self.domain))
        if not (self.n >= 1 and self.m >= self.n):
            raise InvalidInput(f"need m >= n >= 1, got n={self.n}, m={self.m}")
        if not (0.0 < self.lam < 1.0):
            raise InvalidInput("forgetting factor lam must lie in (0, 1)")
        if not self.epsilon > 0:
            raise InvalidInput("epsilon must be positive")
        if not self.gamma_pred > 0:
            raise InvalidInput("gamma_pred must be positive")
        if self.variant not in VARIANTS:
            raise InvalidInput(f"variant must be one of {VARIANTS}")
        if self.variant == "unnormalized" and not (
            self.gamma_lateral is not None and self.gamma_lateral > 0
        ):
            raise InvalidInput("unnormalized variant requires gamma_lateral > 0")
        if self.domain.requires_threshold_unit() and not (
            self.eta_lambda is not None and self.eta_lambda > 0
        ):
            raise InvalidInput(f"domain {self.domain.value} requires eta_lambda > 0")
        if not self.tau_max >= 1:
            raise InvalidInput("tau_max must be at least 1")
        if not self.inner_tol > 0:
            raise InvalidInput("inner_tol must be positive")


@dataclasses.dataclass
class PemState:
    """Mutable learner state; owned by exactly one run at a time."""

    W: np.ndarray
    mu_hat: np.ndarray
    v_hat: np.ndarray
    c_hat: np.ndarray
    t: int = 0
    lambda_L: float = 0.0

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def m(self):
        return self.W.shape[1]

    def copy(self):
        return PemState(
            W=self.W.copy(),
            mu_hat=self.mu_hat.copy(),
            v_hat=self.v_hat.copy(),
            c_hat=self.c_hat.copy(),
            t=self.t,
            lambda_L=self.lambda_L,
        )

    def check(self):
        if np.any(np.diag(self.c_hat) != 0.0):
            raise InvalidInput("c_hat diagonal must be exactly zero")
        if np.any(self.v_hat < 0.0):
            raise InvalidInput("v_hat entries must be nonnegative")
        return self

    def covariance(self):
        """Reassembled covariance estimate diag(v_hat) + c_hat."""
        return np.diag(self.v_hat) + self.c_hat


def init_state(cfg, seed):
    """Fresh state: W = w_scale * I + noise, statistics per cfg.init."""
    rng = stream(seed, "init")
    init = cfg.init
    W = init.w_scale * np.eye(cfg.n, cfg.m)
    if init.noise_scale > 0:
        W = W + init.noise_scale * rng.standard_normal((cfg.n, cfg.m))
    mu = np.full(cfg.n, float(init.mu0))
    if init.c0_mode == "gram":
        G = math.sqrt(init.c0_scale) * np.eye(cfg.n) + rng.normal(
            0.0, math.sqrt(1.0 / 5.0), (cfg.n, cfg.n)
        )
        C0 = G @ G.T
        v = np.diag(C0).copy()
        c = C0 - np.diag(np.diag(C0))
        c = np.triu(c) + np.triu(c, 1).T  # exact symmetry
    else:
        v = np.full(cfg.n, float(init.c0_scale))
        c = np.zeros((cfg.n, cfg.n))
    return PemState(W=W, mu_hat=mu, v_hat=v, c_hat=c, t=0, lambda_L=0.0).check()


def direction(state, y, x, cfg):
    """Fast activity-update direction at output y (frozen statistics).

    Normalized variant:
        d_k = yb_k/(v_k+eps) - sum_{j!=k} c_kj yb_j / ((v_k+eps)(v_j+eps))
              - gamma_pred (y_k - (W x)_k)
    Unnormalized variant replaces the middle term's variance normalization
    with gamma_lateral.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    yb = y - state.mu_hat
    ve = state.v_hat + cfg.epsilon
    if cfg.variant == "normalized":
        lateral = (state.c_hat @ (yb / ve)) / ve
    else:
        lateral = cfg.gamma_lateral * (state.c_hat @ yb)
    return yb / ve - lateral - cfg.gamma_pred * (y - state.W @ x)


@dataclasses.dataclass(frozen=True)
class InferResult:
    y: np.ndarray
    lambda_L: float
    iters: int
    feasible: bool


def _output_feasible(domain, y):
    if domain == SourceDomain.SIMPLEX:
        return bool(np.all(y >= -_FEAS_TOL) and abs(float(np.sum(y)) - 1.0) < _FEAS_SUM_TOL)
    return contains(domain, y, _FEAS_TOL)


def infer_output(state, x, cfg):
    """Relax the output activity for one sample; statistics stay frozen.

    Starts from y(0) = 0 and a cold (or warm-started) threshold, iterates the
    projected direction steps, and stops early once both the activity change
    (inf-norm) and the threshold change fall below inner_tol.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    lambda_L0 = state.lambda_L if (cfg.warm_start_threshold and cfg.domain.requires_threshold_unit()) else 0.0
    y, lam_L, iters, fail_tau = _kernels.infer_kernel(
        x,
        state.W,
        state.mu_hat,
        state.v_hat,
        state.c_hat,
        float(lambda_L0),
        _DOMAIN_CODES[cfg.domain],
        _kernels.NORMALIZED if cfg.variant == "normalized" else _kernels.UNNORMALIZED,
        float(cfg.epsilon),
        float(cfg.gamma_pred),
        float(cfg.gamma_lateral or 0.0),
        _RULE_CODES[cfg.y_schedule.rule],
        float(cfg.y_schedule.base),
        float(cfg.y_schedule.divider),
        float(cfg.y_schedule.floor),
        float(cfg.eta_lambda or 0.0),
        int(cfg.tau_max),
        float(cfg.inner_tol),
    )
    if fail_tau >= 0:
        raise NumericalDivergence(
            f"non-finite activity at inner iteration {fail_tau}", tau=int(fail_tau)
        )
    return InferResult(y=y, lambda_L=float(lam_L), iters=int(iters), feasible=_output_feasible(cfg.domain, y))


def _stat_weights(cfg, t_new):
    if cfg.exact_normalization:
        alpha = (1.0 - cfg.lam) / (1.0 - cfg.lam**t_new)
        return 1.0 - alpha, alpha
    return cfg.lam, 1.0 - cfg.lam


def slow_update(state, x, y, cfg):
    """One slow-timescale step; returns the updated state.

    Order matters: the prediction error uses the pre-update W, and the mean
    is refreshed before the variance/cross-covariance traces so that the
    centered activity uses the new mean.
    """
    out = state.copy()
    alpha_w = schedule_value(cfg.w_schedule, state.t)
    weight_old, weight_new = _stat_weights(cfg, state.t + 1)
    _kernels.slow_kernel(
        out.W,
        out.mu_hat,
        out.v_hat,
        out.c_hat,
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(alpha_w),
        float(weight_old),
        float(weight_new),
    )
    out.t = state.t + 1
    return out


@dataclasses.dataclass
class TraceRow:
    t: int
    r2_direct: float
    r2_spectral: float
    lower_bound: float
    upper_bound: float
    norm_bound: float
    b_spec: float
    b_lambda_min: float
    g_norm: float
    r_norm: float
    descent_certified: bool

    COLUMNS = (
        "t",
        "r2_direct",
        "r2_spectral",
        "lower_bound",
        "upper_bound",
        "norm_bound",
        "b_spec",
        "b_lambda_min",
        "g_norm",
        "r_norm",
        "descent_certified",
    )


@dataclasses.dataclass
class RunResult:
    state: PemState
    Y: np.ndarray
    trace: Optional[list]
    mean_inner_iters: float
    infeasible_fraction: float


def run_online(X, cfg, seed, diag_stride=None):
    """Single streaming pass over the mixture columns of X.

    Per sample: fast inference against the frozen state, then the slow
    update.  When diag_stride is set, every diag_stride-th sample records a
    TraceRow with the Taylor-remainder report of the refreshed covariance
    and the descent-condition norms at the converged output.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInput("X must be an m x T matrix")
    if X.shape[0] != cfg.m:
        raise InvalidInput(f"X has {X.shape[0]} rows but config expects m={cfg.m}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("X has non-finite entries")
    if diag_stride is not None and diag_stride < 1:
        raise InvalidInput("diag_stride must be a positive integer")
    from . import diagnostics  # deferred: diagnostics depends on this module

    T = X.shape[1]
    state = init_state(cfg, seed)
    Y = np.empty((cfg.n, T))
    trace = [] if diag_stride is not None else None
    total_iters = 0
    infeasible = 0
    for t in range(T):
        x = X[:, t]
        try:
            res = infer_output(state, x, cfg)
        except NumericalDivergence as err:
            err.sample = t
            raise
        record = trace is not None and (t + 1) % diag_stride == 0
        if record and cfg.variant == "normalized":
            check = diagnostics.descent_check(state, res.y, x, cfg)
        else:
            check = None
        state = slow_update(state, x, res.y, cfg)
        state.lambda_L = res.lambda_L
        Y[:, t] = res.y
        total_iters += res.iters
        infeasible += 0 if res.feasible else 1
        if record:
            rep = diagnostics.taylor_remainder(state.covariance(), cfg.epsilon)
            trace.append(
                TraceRow(
                    t=t + 1,
                    r2_direct=rep.r2_direct,
                    r2_spectral=rep.r2_spectral,
                    lower_bound=rep.lower_bound,
                    upper_bound=rep.upper_bound,
                    norm_bound=rep.norm_bound,
                    b_spec=rep.b_spec,
                    b_lambda_min=rep.b_lambda_min,
                    g_norm=check.g_norm if check else float("nan"),
                    r_norm=check.r_norm if check else float("nan"),
                    descent_certified=check.descent_certified if check else False,
                )
            )
    return RunResult(
        state=state,
        Y=Y,
        trace=trace,
        mean_inner_iters=total_iters / T if T else 0.0,
        infeasible_fraction=infeasible / T if T else 0.0,
    )


def evaluate_outputs(X, state, cfg):
    """Outputs of the frozen separator over all columns of X.

    Runs the fast inference only (no learning); this is the final-separator
    read-out used for reporting recovery quality, so the transient of the
    learning phase does not contaminate the metric.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    T = X.shape[1]
    Y = np.empty((state.n, T))
    for t in range(T):
        Y[:, t] = infer_output(state, X[:, t], cfg).y
    return Y


# --- per-domain presets ----------------------------------------------------

_BASE_PRESETS = {
    "antisparse": dict(
        lam=0.99,
        epsilon=1e-5,
        gamma_pred=250.0,
        w_schedule=StepSchedule("divide_by_index", 0.05, 5000.0, 1e-8),
        y_schedule=StepSchedule("divide_by_loop_index", 0.5, 1.0, 1e-6),
        tau_max=250,
        inner_tol=1e-7,
    ),
    "nn_antisparse": dict(
        lam=0.95,
        epsilon=1e-4,
        gamma_pred=750.0,
        w_schedule=StepSchedule("divide_by_index", 0.05, 20000.0, 1e-8),
        y_schedule=StepSchedule("divide_by_loop_index", 0.05, 1.0, 1e-4),
        tau_max=500,
        inner_tol=1e-6,
        init=InitSpec(w_scale=0.01, noise_scale=1.0 / 15.0, c0_scale=2.0),
    ),
    "sparse": dict(
        lam=0.99,
        epsilon=1e-5,
        gamma_pred=150.0,
        w_schedule=StepSchedule("divide_by_index", 0.05, 5000.0, 1e-8),
        y_schedule=StepSchedule("divide_by_loop_index", 0.05, 1.0, 1e-4),
        eta_lambda=0.5,
        tau_max=100,
        inner_tol=1e-6,
    ),
    "nn_sparse": dict(
        lam=0.99,
        epsilon=1e-5,
        gamma_pred=250.0,
        w_schedule=StepSchedule("divide_by_index", 0.05, 2000.0, 1e-8),
        y_schedule=StepSchedule("divide_by_loop_index", 0.1, 1.0, 1e-4),
        eta_lambda=0.5,
        tau_max=100,
        inner_tol=1e-7,
    ),
    "simplex": dict(
        lam=0.99,
        epsilon=1e-5,
        gamma_pred=150.0,
        w_schedule=StepSchedule("divide_by_log_index", 0.05, 5000.0, 1e-8),
        y_schedule=StepSchedule("divide_by_loop_index", 0.1, 1.0, 1e-4),
        eta_lambda=0.05,
        tau_max=100,
        inner_tol=1e-7,
    ),
}

_UPEM_GAMMA_LATERAL = {
    "antisparse": 10.0,
    "nn_antisparse": 300.0,
    "sparse": 50.0,
    "nn_sparse": 3200.0,
    "simplex": 100.0,
}


def preset_names():
    names = list(_BASE_PRESETS)
    names += [f"u-pem/{d}" for d in _BASE_PRESETS]
    return names


def get_preset(name, n, m):
    """PemConfig for a named per-domain preset ("sparse", "u-pem/sparse", ...)."""
    key = str(name)
    unnormalized = key.startswith("u-pem/")
    domain_key = key[len("u-pem/"):] if unnormalized else key
    if domain_key not in _BASE_PRESETS:
        raise InvalidInput(f"unknown preset {name!r} (known: {', '.join(preset_names())})")
    kwargs = dict(_BASE_PRESETS[domain_key])
    if unnormalized:
        kwargs["variant"] = "unnormalized"
        kwargs["gamma_lateral"] = _UPEM_GAMMA_LATERAL[domain_key]
    return PemConfig(n=n, m=m, domain=SourceDomain(domain_key), **kwargs)


# --- state checkpoints ("PEMS") --------------------------------------------

_STATE_MAGIC = b"PEMS"
_STATE_VERSION = 1


def save_state(path, state):
    """Checkpoint a state: header, then W, mu, v, upper triangle of c, lambda_L."""
    n, m = state.W.shape
    iu = np.triu_indices(n, 1)
    with open(path, "wb") as fh:
        fh.write(_STATE_MAGIC)
        fh.write(struct.pack("<IIIQ", _STATE_VERSION, n, m, state.t))
        fh.write(np.ascontiguousarray(state.W, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.mu_hat, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.v_hat, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.c_hat[iu], dtype="<f8").tobytes())
        fh.write(struct.pack("<d", state.lambda_L))


def load_state(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _STATE_MAGIC:
            raise InvalidInput(f"{path} is not a PEMS checkpoint")
        version, n, m, t = struct.unpack("<IIIQ", fh.read(20))
        if version != _STATE_VERSION:
            raise InvalidInput(f"unsupported PEMS version {version}")
        W = np.frombuffer(fh.read(8 * n * m), dtype="<f8").reshape(n, m).copy()
        mu = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        v = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        ntri = n * (n - 1) // 2
        tri = np.frombuffer(fh.read(8 * ntri), dtype="<f8")
        c = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        c[iu] = tri
        c = c + c.T
        (lambda_L,) = struct.unpack("<d", fh.read(8))
    return PemState(W=W, mu_hat=mu, v_hat=v, c_hat=c, t=int(t), lambda_L=float(lambda_L)).check()
