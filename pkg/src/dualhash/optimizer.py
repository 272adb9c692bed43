"""Primal-dual solver loop with momentum or recursive-momentum x-updates,
shared B/dual steps, Lyapunov diagnostics, and the three reference baselines.

One iteration runs x -> B -> dual: the x block takes a stochastic step on
F(., B), B takes an explicit gradient step on the Lagrangian, and the dual
takes a proximal ascent step with B-extrapolation, which keeps every dual
iterate inside [-lam, lam] by construction.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DivergenceError
from .numerics import frob_norm_sq, sample_indices
from .regularizer import (
    WeaklyConvexRegularizer,
    prox_conj,
    prox_wc,
    subdiff_conj_bounds,
)

# tau * L_F below this keeps the Lyapunov coefficient C_B positive at
# delta = 1/6 (root of 13 t^2 / 2 + 2 t - 1)
TAU_LF_BOUND = (math.sqrt(30.0) - 2.0) / 13.0
DEFAULT_DELTA = 1.0 / 6.0
DEFAULT_NU = 0.05
# default analysis budget delta_tilde = c_delta * delta^2 chosen so that
# tau <= sqrt(delta_tilde)/L_F coincides with the C_B-positivity bound
DEFAULT_C_DELTA = (6.0 * TAU_LF_BOUND) ** 2


def default_delta_tilde(delta=DEFAULT_DELTA):
    return DEFAULT_C_DELTA * delta * delta


@dataclass
class StoMParams:
    """Momentum solver parameters: x+ = y - eta * grad(z), with
    y/z the alpha/beta extrapolations of (x, x_prev)."""

    eta: float
    alpha: float = 0.905
    beta: float = 0.905
    tau: float = 0.01
    batch: object = 32  # int batch size, or "full" for the exact gradient
    delta_tilde: float = field(default_factory=default_delta_tilde)
    L_F: float = None  # when known, enforces tau <= sqrt(delta_tilde)/L_F

    def __post_init__(self):
        if not (self.eta > 0 and self.tau > 0):
            raise ConfigError("eta and tau must be positive")
        if not (0.0 <= self.alpha < 1.0 and 0.0 <= self.beta < 1.0):
            raise ConfigError("momentum coefficients must lie in [0, 1)")
        if self.batch != "full" and (not isinstance(self.batch, int) or self.batch < 1):
            raise ConfigError("batch must be a positive int or 'full'")
        if not (self.delta_tilde > 0):
            raise ConfigError("delta_tilde must be positive")
        if self.L_F is not None and self.tau > math.sqrt(self.delta_tilde) / self.L_F:
            raise ConfigError(
                f"tau={self.tau} exceeds sqrt(delta_tilde)/L_F="
                f"{math.sqrt(self.delta_tilde) / self.L_F:.6g}"
            )

    @staticmethod
    def from_theory(
        L_F,
        alpha=0.3,
        beta=0.3,
        nu=DEFAULT_NU,
        delta=DEFAULT_DELTA,
        tau=None,
        batch="full",
    ):
        """Step sizes that certify the Lyapunov descent property.

        eta_k = (1 - 2a - nu) / (2*Lbar + 2(1+nu) L beta^2 / (a(1-a))) with
        Lbar = 2L + K3 + K4; requires 0 < alpha < (1 - nu)/2.
        """
        if not (0 < alpha < (1.0 - nu) / 2.0):
            raise ConfigError("theory schedule needs 0 < alpha < (1 - nu)/2")
        if not (0 < beta < 1):
            raise ConfigError("theory schedule needs beta in (0, 1)")
        tau_max = 6.0 * delta * TAU_LF_BOUND / L_F
        # default stays strictly inside the bound so C_B > 0 with margin
        tau = 0.9 * tau_max if tau is None else tau
        if tau > tau_max * (1 + 1e-12):
            raise ConfigError(f"tau={tau} exceeds positivity bound {tau_max:.6g}")
        K3 = tau * L_F**2 / delta
        K4 = 3.0 * delta * tau * L_F**2
        Lbar = 2.0 * L_F + K3 + K4
        eta_k = (1.0 - 2.0 * alpha - nu) / (
            2.0 * Lbar + 2.0 * (1.0 + nu) * L_F * beta**2 / (alpha * (1.0 - alpha))
        )
        return StoMParams(
            eta=eta_k,
            alpha=alpha,
            beta=beta,
            tau=tau,
            batch=batch,
            delta_tilde=default_delta_tilde(delta),
            L_F=L_F,
        )


@dataclass
class StoRMParams:
    """Recursive-momentum solver parameters (constant in k)."""

    eta: float
    rho: float
    tau: float = 0.01
    batch: object = 32
    batch_init: int = None  # first-iteration batch; defaults to batch

    def __post_init__(self):
        if not (self.eta > 0 and self.tau > 0):
            raise ConfigError("eta and tau must be positive")
        if not (0.0 < self.rho <= 1.0):
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")
        if self.batch != "full" and (not isinstance(self.batch, int) or self.batch < 1):
            raise ConfigError("batch must be a positive int or 'full'")
        if self.batch_init is None:
            self.batch_init = self.batch if isinstance(self.batch, int) else None

    @staticmethod
    def from_schedule(
        T,
        L_F,
        eta=0.25,
        rho=1.0,
        c_b=3.0,
        batch=32,
        tau=None,
        delta=DEFAULT_DELTA,
    ):
        """Horizon-indexed schedule: eta_k = eta/(Ltilde * T^(1/3)),
        rho_k = 8 rho eta^2 / T^(2/3), b1 = ceil(c_b T^(1/3))."""
        if not (0 < eta <= 0.5):
            raise ConfigError("schedule needs 0 < eta <= 1/2")
        if not (1.0 <= rho <= 1.0 / (8.0 * eta * eta)):
            raise ConfigError("schedule needs 1 <= rho <= 1/(8 eta^2)")
        tau_max = 6.0 * delta * TAU_LF_BOUND / L_F
        tau = 0.9 * tau_max if tau is None else tau
        K3 = tau * L_F**2 / delta
        K4 = 3.0 * delta * tau * L_F**2
        Ltilde = L_F + K3 + K4
        eta_k = eta / (Ltilde * T ** (1.0 / 3.0))
        rho_k = min(8.0 * rho * eta * eta / T ** (2.0 / 3.0), 1.0)
        b1 = max(int(math.ceil(c_b * T ** (1.0 / 3.0))), 1)
        return StoRMParams(eta=eta_k, rho=rho_k, tau=tau, batch=batch, batch_init=b1)


@dataclass
class LyapunovConfig:
    """Constants of the descent potential, derived from (L_F, tau, eta, ...).

    K1..K6 come from the one-iteration progress bounds; C1..C4 weight the
    squared iterate differences.  validate() checks the positivity system;
    an invalid configuration still evaluates but certifies nothing.
    """

    L_F: float
    tau: float
    eta: float
    alpha: float = 0.0
    beta: float = 0.0
    delta: float = DEFAULT_DELTA
    nu: float = DEFAULT_NU
    variant: str = "stom"

    def __post_init__(self):
        L, tau, eta = self.L_F, self.tau, self.eta
        d = self.delta
        self.K1 = 3.0 * d / tau
        self.K2 = 2.0 / tau - L - 3.0 * d * tau * (1.0 / tau + L) ** 2
        self.K3 = tau * L * L / d
        self.K4 = 3.0 * d * tau * L * L
        self.K5 = (1.0 - self.alpha) / eta - 2.0 * L
        self.K6 = self.alpha / eta + 2.0 * L * self.beta**2
        self.Lbar = 2.0 * L + self.K3 + self.K4
        self.Ltilde = L + self.K3 + self.K4
        self.C1 = self.K1
        self.C2 = 0.5 * (self.K2 - self.K1 + self.K3)
        self.C3 = self.K4
        denom = 1.0 - 2.0 * self.alpha - self.nu
        if self.variant == "stom" and self.alpha > 0 and denom > 0:
            self.C4 = (self.Lbar + 2.0 * L * self.beta**2 / self.alpha) / denom
        else:
            self.C4 = 0.0 if self.variant == "storm" else math.nan
        self.C_B = 0.5 * (self.K2 - self.K3 - self.K1)
        self.C_x = self.nu * self.C4 if self.variant == "stom" else 1.0 / eta - self.Ltilde

    def validate(self):
        """Return the list of violated positivity conditions (empty = valid)."""
        bad = []
        tol = 1e-12
        if not self.C1 > 0:
            bad.append("C1 > 0")
        if not self.C2 > 0:
            bad.append("C2 > 0")
        if not self.C_B > 0:
            bad.append("C_B > 0")
        if self.variant == "stom":
            if not (self.C4 > 0 and np.isfinite(self.C4)):
                bad.append("C4 > 0")
            if not self.C_x > 0:
                bad.append("C_x > 0")
            if np.isfinite(self.C4):
                if self.K5 - self.K3 - self.C3 - self.C4 < self.nu * self.C4 - tol:
                    bad.append("K5 - K3 - C3 - C4 >= nu*C4")
                if self.C4 - self.K6 < self.nu * self.C4 - tol:
                    bad.append("C4 - K6 >= nu*C4")
        else:
            if not self.eta * self.Ltilde <= 0.5 + tol:
                bad.append("eta * Ltilde <= 1/2")
            if not self.C_x > 0:
                bad.append("C_x > 0")
        return bad


def lyapunov_value(cfg, lagrangian, x_window, B_window, variant=None):
    """Potential at the middle iterate of a (k-1, k, k+1) window.

    Psi_k = L(x_k, B_k, Lam_k) - C1*D_B(k+1) + C2*D_B(k) - C3*D_x(k+1)
            [+ C4*D_x(k) in the momentum variant], where D_w(k) is half the
    squared step ||w_k - w_{k-1}||^2.
    """
    variant = variant or cfg.variant
    x_prev, x, x_next = x_window
    B_prev, B, B_next = B_window
    dB_next = 0.5 * frob_norm_sq(B_next - B)
    dB = 0.5 * frob_norm_sq(B - B_prev)
    dx_next = 0.5 * frob_norm_sq(x_next - x)
    val = lagrangian - cfg.C1 * dB_next + cfg.C2 * dB - cfg.C3 * dx_next
    if variant == "stom":
        val += cfg.C4 * 0.5 * frob_norm_sq(x - x_prev)
    return val


@dataclass
class DiagnosticsRecord:
    """One logged iteration; NaN marks quantities not logged that row."""

    k: int
    lagrangian: float
    psi: float
    dx_sq: float
    dB_sq: float
    dLam_sq: float
    quant_error: float
    sigma_hat_sq: float
    lambda_inf: float
    dual_identity_gap: float

    FIELDS = (
        "k",
        "lagrangian",
        "psi",
        "dx_sq",
        "dB_sq",
        "dLam_sq",
        "quant_error",
        "sigma_hat_sq",
        "lambda_inf",
        "dual_identity_gap",
    )


@dataclass
class RunResult:
    """Trajectory summary of one solver run."""

    rows: list
    x: np.ndarray
    B: np.ndarray
    Lam: np.ndarray
    x_R: np.ndarray
    R: int
    lambda_max: float
    dual_identity_max: float
    L_F: float
    lyapunov: object
    probes: dict
    variant: str


def _draw_batch(problem, rng, size):
    if size == "full":
        return None
    return sample_indices(rng, problem.n, min(size, problem.n))


def _dual_identity_gap(reg, B_next, B, Lam, Lam_next, tau):
    """Max entrywise distance of the implied subgradient from d h*(Lam+)."""
    G = (2.0 * B_next - B) + tau * (Lam - Lam_next)
    lo, hi = subdiff_conj_bounds(reg, Lam_next)
    return float(np.max(np.abs(G - np.clip(G, lo, hi))))


def step_B(problem, x_next, B, Lam, tau):
    """B+ = B - tau * (grad_B F(x+, B) + Lam)."""
    return B - tau * (problem.grad_B_F(x_next, B) + Lam)


def step_Lambda(reg, B_next, B, Lam, tau):
    """Proximal dual ascent with B-extrapolation:
    Lam+ = prox_{(1/tau) h*}(Lam + (2 B+ - B)/tau); range always [-lam, lam]."""
    w = Lam + (2.0 * B_next - B) / tau
    return prox_conj(reg, w, 1.0 / tau)


def step_x_stom(problem, state, params, rng):
    """Momentum x-step; returns (x_next, gradient_estimate, batch)."""
    x, x_prev, B = state["x"], state["x_prev"], state["B"]
    z = x + params.beta * (x - x_prev)
    y = x + params.alpha * (x - x_prev)
    idx = _draw_batch(problem, rng, params.batch)
    G = problem.grad_x_F(z, B, idx)
    return y - params.eta * G, G, idx


def step_x_storm(problem, state, params, rng):
    """Recursive-momentum x-step; evaluates the fresh batch at the current
    and the previous iterate, then blends with the carried estimate."""
    x, x_prev = state["x"], state["x_prev"]
    B, B_prev = state["B"], state["B_prev"]
    k = state["k"]
    if k == 1 or state["storm_d"] is None:
        size = params.batch_init if params.batch != "full" else "full"
        idx = _draw_batch(problem, rng, size)
        D = problem.grad_x_F(x, B, idx)
    else:
        idx = _draw_batch(problem, rng, params.batch)
        g_now = problem.grad_x_F(x, B, idx)
        g_prev = problem.grad_x_F(x_prev, B_prev, idx)
        D = g_now + (1.0 - params.rho) * (state["storm_d"] - g_prev)
    return x - params.eta * D, D, idx


def run(
    problem,
    variant,
    params,
    T,
    rng,
    x0,
    log_every=None,
    heavy_every=10,
    sigma_probe=128,
    lyap=None,
    keep_x_history=True,
    probe_estimator=False,
    callback=None,
    B_init="codes",
):
    """Drive the solver for T iterations from x0; the dual starts at zero.

    B_init picks the auxiliary-code start: "codes" copies the network
    outputs (zero initial penalty), "sign" binarizes them instead (zero
    initial regularizer value, immediate pull toward vertices).

    Returns a RunResult whose rows follow the logging cadence: every
    iteration by default (T <= 10^4), with full-data extras (quantization
    error, per-sample gradient variance) every `heavy_every` logged rows.
    probe_estimator additionally measures, per iteration, the squared error
    of the solver's gradient estimate and of a fresh plain mini-batch
    estimate against the exact gradient.
    """
    if variant not in ("stom", "storm"):
        raise ConfigError(f"unknown solver variant {variant!r}")
    if T < 1:
        raise ConfigError("need T >= 1")
    if log_every is None:
        log_every = 1 if T <= 10_000 else int(math.ceil(T / 10_000))

    x = np.array(x0, dtype=np.float64)
    B = problem.codes(x).copy()
    if B_init == "sign":
        B = np.where(B >= 0.0, 1.0, -1.0)
    elif B_init != "codes":
        raise ConfigError(f"B_init must be 'sign' or 'codes', got {B_init!r}")
    Lam = np.zeros_like(B)
    state = {
        "x": x,
        "x_prev": x.copy(),
        "B": B,
        "B_prev": B.copy(),
        "Lam": Lam,
        "storm_d": None,
        "k": 1,
    }
    sigma_rng = rng.split()
    probe_rng = rng.split() if probe_estimator else None

    L0 = problem.lagrangian_value(x, B, Lam)
    guard = 1e6 * max(1.0, abs(L0))
    rows = []
    lambda_max = 0.0
    dual_identity_max = 0.0
    probes = {"e_sq": [], "plain_sq": []} if probe_estimator else {}
    x_hist = [x.copy()] if keep_x_history else None
    reg = problem.reg

    for k in range(1, T + 1):
        state["k"] = k
        if variant == "stom":
            x_next, G, idx = step_x_stom(problem, state, params, rng)
            storm_d = None
        else:
            x_next, D, idx = step_x_storm(problem, state, params, rng)
            storm_d = D
        B_next = step_B(problem, x_next, state["B"], state["Lam"], params.tau)
        Lam_next = step_Lambda(reg, B_next, state["B"], state["Lam"], params.tau)

        lam_inf = float(np.max(np.abs(Lam_next))) if Lam_next.size else 0.0
        id_gap = _dual_identity_gap(reg, B_next, state["B"], state["Lam"], Lam_next, params.tau)
        lambda_max = max(lambda_max, lam_inf)
        dual_identity_max = max(dual_identity_max, id_gap)

        if probe_estimator:
            full_here = problem.grad_x_F(state["x"], state["B"])
            est = storm_d if storm_d is not None else G
            # estimator error is measured at the point the step used
            if variant == "storm":
                err = est - full_here
                probes["e_sq"].append(float(np.dot(err, err)))
            else:
                probes["e_sq"].append(math.nan)
            size = params.batch if params.batch != "full" else problem.n
            jdx = sample_indices(probe_rng, problem.n, min(size, problem.n))
            plain = problem.grad_x_F(state["x"], state["B"], jdx)
            perr = plain - full_here
            probes["plain_sq"].append(float(np.dot(perr, perr)))

        if k % log_every == 0 or k == T:
            lag_val = problem.lagrangian_value(x_next, B_next, Lam_next)
            if not math.isfinite(lag_val) or abs(lag_val) > guard:
                raise DivergenceError(
                    f"Lagrangian {lag_val} at iteration {k} breaches the guard",
                    diagnostics=rows,
                )
            stat = problem.stationarity(x_next, B_next, Lam_next)
            psi = math.nan
            if lyap is not None:
                lag_mid = problem.lagrangian_value(state["x"], state["B"], state["Lam"])
                psi = lyapunov_value(
                    lyap,
                    lag_mid,
                    (state["x_prev"], state["x"], x_next),
                    (state["B_prev"], state["B"], B_next),
                    variant=variant,
                )
            heavy = (len(rows) % heavy_every == 0) or k == T
            quant = math.nan
            sig = math.nan
            if heavy:
                U = problem.codes(x_next)
                quant = float(np.mean(np.abs(np.abs(U) - 1.0)))
                if sigma_probe:
                    sig = problem.sigma_hat_sq(
                        x_next, B_next, probe=sigma_probe, rng=sigma_rng
                    )
            rec = DiagnosticsRecord(
                k=k,
                lagrangian=lag_val,
                psi=psi,
                dx_sq=stat.dx_sq,
                dB_sq=stat.dB_sq,
                dLam_sq=stat.dLam_sq,
                quant_error=quant,
                sigma_hat_sq=sig,
                lambda_inf=lam_inf,
                dual_identity_gap=id_gap,
            )
            rows.append(rec)
            if callback is not None:
                callback(state, rec)

        state["x_prev"] = state["x"]
        state["x"] = x_next
        state["B_prev"] = state["B"]
        state["B"] = B_next
        state["Lam"] = Lam_next
        state["storm_d"] = storm_d
        if keep_x_history:
            x_hist.append(x_next.copy())

    # return rule: an iterate drawn uniformly from {2, ..., T+1}
    R = int(rng.integers(2, T + 2))
    x_R = x_hist[R - 1].copy() if keep_x_history else None
    return RunResult(
        rows=rows,
        x=state["x"],
        B=state["B"],
        Lam=state["Lam"],
        x_R=x_R,
        R=R,
        lambda_max=lambda_max,
        dual_identity_max=dual_identity_max,
        L_F=getattr(params, "L_F", None),
        lyapunov=lyap,
        probes={k2: np.asarray(v) for k2, v in probes.items()},
        variant=variant,
    )


# -- baselines ---------------------------------------------------------------


@dataclass
class BaselineParams:
    """Shared knobs for the subgradient / proximal / smooth baselines."""

    eta: float
    momentum: float = 0.905
    batch: object = 32
    reg_weight: float = 1.0
    tau_B: float = 0.5  # proximal B-step size (spgd-wcr only)

    def __post_init__(self):
        if not (self.eta > 0):
            raise ConfigError("eta must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.reg_weight < 0:
            raise ConfigError("reg_weight must be nonnegative")
        if not (self.tau_B > 0):
            raise ConfigError("tau_B must be positive")


def run_baseline(problem, variant, params, T, rng, x0, log_every=None, heavy_every=10):
    """Train the composition objective f + regularizer(D(x)) directly.

    sgdm: heavy-ball subgradient steps on the W-penalty (sign rule at kinks);
    dhn: the same but with the smooth log-cosh penalty gradient;
    spgd-wcr: alternating split scheme, momentum x-steps on F(x, B) and an
    exact proximal step on B for the weakly convex square penalty.
    """
    if variant not in ("sgdm", "spgd-wcr", "dhn"):
        raise ConfigError(f"unknown baseline variant {variant!r}")
    if log_every is None:
        log_every = 1 if T <= 10_000 else int(math.ceil(T / 10_000))

    x = np.array(x0, dtype=np.float64)
    x_prev = x.copy()
    B = problem.codes(x).copy()
    wc = (
        WeaklyConvexRegularizer(problem.reg.lam * max(params.reg_weight, 1e-300))
        if variant == "spgd-wcr"
        else None
    )
    rows = []
    for k in range(1, T + 1):
        idx = _draw_batch(problem, rng, params.batch)
        if variant == "spgd-wcr":
            y = x + params.momentum * (x - x_prev)
            G = problem.grad_x_F(x, B, idx)
            x_next = y - params.eta * G
            gB = problem.grad_B_F(x_next, B)
            B = prox_wc(wc, B - params.tau_B * gB, params.tau_B)
        else:
            kind = "w_subgrad" if variant == "sgdm" else "logcosh"
            y = x + params.momentum * (x - x_prev)
            G = problem.grad_x_composition(x, idx, params.reg_weight, kind)
            x_next = y - params.eta * G

        if k % log_every == 0 or k == T:
            heavy = (len(rows) % heavy_every == 0) or k == T
            quant = math.nan
            if heavy:
                U = problem.codes(x_next)
                quant = float(np.mean(np.abs(np.abs(U) - 1.0)))
            obj = problem.f_value(x_next)
            if not math.isfinite(obj):
                raise DivergenceError(
                    f"objective {obj} at iteration {k}", diagnostics=rows
                )
            rows.append(
                DiagnosticsRecord(
                    k=k,
                    lagrangian=math.nan,
                    psi=math.nan,
                    dx_sq=math.nan,
                    dB_sq=math.nan,
                    dLam_sq=math.nan,
                    quant_error=quant,
                    sigma_hat_sq=math.nan,
                    lambda_inf=math.nan,
                    dual_identity_gap=math.nan,
                )
            )
        x_prev, x = x, x_next

    return RunResult(
        rows=rows,
        x=x,
        B=B,
        Lam=np.zeros_like(B),
        x_R=None,
        R=T + 1,
        lambda_max=math.nan,
        dual_identity_max=math.nan,
        L_F=None,
        lyapunov=None,
        probes={},
        variant=variant,
    )
