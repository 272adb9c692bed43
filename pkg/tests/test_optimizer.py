import numpy as np
import pytest

from dualhash.exceptions import ConfigError, DivergenceError
from dualhash.numerics import Rng
from dualhash.optimizer import (
    BaselineParams,
    LyapunovConfig,
    StoMParams,
    StoRMParams,
    TAU_LF_BOUND,
    lyapunov_value,
    run,
    run_baseline,
    step_B,
    step_Lambda,
    step_x_stom,
    step_x_storm,
)
from dualhash.problem import LinearDecoupledProblem
from dualhash.regularizer import WRegularizer, subdiff_conj_bounds
from dualhash.testutil import small_random_problem


def toy_problem(rng, n=6, d=4, gamma=3.0, lam=0.05, with_drift=False):
    c = np.asarray(rng.normal(size=n * d)) if with_drift else None
    prob = LinearDecoupledProblem(n, d, gamma, WRegularizer(lam), c=c)
    x0 = np.asarray(rng.normal(size=n * d)) * 0.5
    return prob, x0


def fresh_state(prob, x0, lam_shape=None):
    B = prob.codes(x0).copy()
    return {
        "x": np.array(x0),
        "x_prev": np.array(x0),
        "B": B,
        "B_prev": B.copy(),
        "Lam": np.zeros_like(B),
        "storm_d": None,
        "k": 1,
    }


def test_stom_alpha_beta_zero_is_plain_sgd():
    rng = Rng(60)
    prob, x0 = toy_problem(rng)
    params = StoMParams(eta=0.1, alpha=0.0, beta=0.0, tau=0.01, batch=3)
    state = fresh_state(prob, x0)
    rng_a, rng_b = Rng(7), Rng(7)
    x_next, G, idx = step_x_stom(prob, state, params, rng_a)
    from dualhash.numerics import sample_indices

    idx_b = sample_indices(rng_b, prob.n, 3)
    expect = x0 - 0.1 * prob.grad_x_F(x0, state["B"], idx_b)
    assert np.array_equal(x_next, expect)


def test_stom_zero_displacement_ignores_momentum():
    rng = Rng(61)
    prob, x0 = toy_problem(rng)
    params = StoMParams(eta=0.1, alpha=0.9, beta=0.8, tau=0.01, batch="full")
    state = fresh_state(prob, x0)  # x == x_prev
    x_next, _, _ = step_x_stom(prob, state, params, Rng(0))
    expect = x0 - 0.1 * prob.grad_x_F(x0, state["B"])
    assert np.allclose(x_next, expect, atol=0)


def test_stom_heavy_ball_form():
    rng = Rng(62)
    prob, x0 = toy_problem(rng)
    params = StoMParams(eta=0.1, alpha=0.5, beta=0.0, tau=0.01, batch="full")
    state = fresh_state(prob, x0)
    state["x_prev"] = x0 - 0.2
    x_next, _, _ = step_x_stom(prob, state, params, Rng(0))
    # gradient at z = x (beta = 0), step from y = x + alpha*(x - x_prev)
    expect = x0 + 0.5 * 0.2 - 0.1 * prob.grad_x_F(x0, state["B"])
    assert np.allclose(x_next, expect, atol=0)


def test_storm_first_iteration_is_plain_gradient():
    rng = Rng(63)
    prob, x0 = toy_problem(rng)
    params = StoRMParams(eta=0.1, rho=0.3, tau=0.01, batch=3, batch_init=4)
    state = fresh_state(prob, x0)
    rng_a, rng_b = Rng(5), Rng(5)
    x_next, D, _ = step_x_storm(prob, state, params, rng_a)
    from dualhash.numerics import sample_indices

    idx = sample_indices(rng_b, prob.n, 4)
    expect_D = prob.grad_x_F(x0, state["B"], idx)
    assert np.array_equal(D, expect_D)
    assert np.array_equal(x_next, x0 - 0.1 * expect_D)


def test_storm_rho_one_collapses_to_plain_gradient():
    rng = Rng(64)
    prob, x0 = toy_problem(rng)
    params = StoRMParams(eta=0.05, rho=1.0, tau=0.01, batch=3)
    state = fresh_state(prob, x0)
    state["k"] = 2
    state["storm_d"] = np.ones(x0.size) * 99.0  # history must be ignored
    state["x_prev"] = x0 + 0.1
    rng_a, rng_b = Rng(6), Rng(6)
    _, D, _ = step_x_storm(prob, state, params, rng_a)
    from dualhash.numerics import sample_indices

    idx = sample_indices(rng_b, prob.n, 3)
    assert np.allclose(D, prob.grad_x_F(x0, state["B"], idx), atol=0)


def test_storm_full_batch_error_is_zero():
    rng = Rng(65)
    prob, x0 = toy_problem(rng)
    params = StoRMParams(eta=0.05, rho=0.3, tau=0.05, batch="full")
    res = run(prob, "storm", params, 20, Rng(1), x0, sigma_probe=None, probe_estimator=True)
    assert np.allclose(res.probes["e_sq"], 0.0, atol=1e-22)


def test_step_B_stationary_when_gradient_cancels_dual():
    rng = Rng(66)
    prob, x0 = toy_problem(rng)
    B = prob.codes(x0) + 0.3
    Lam = -prob.grad_B_F(x0, B)
    assert np.allclose(step_B(prob, x0, B, Lam, 0.01), B, atol=0)


def test_step_B_fixed_point_at_codes_zero_dual():
    rng = Rng(67)
    prob, x0 = toy_problem(rng)
    B = prob.codes(x0).copy()
    assert np.allclose(step_B(prob, x0, B, np.zeros_like(B), 0.01), B, atol=0)


def test_step_B_optimality_identity_rearrangement():
    rng = Rng(68)
    prob, x0 = toy_problem(rng)
    B = np.asarray(rng.normal(size=(prob.n, prob.d)))
    Lam = np.asarray(rng.uniform(-0.05, 0.05, size=B.shape))
    tau = 0.07
    B_next = step_B(prob, x0, B, Lam, tau)
    # rearranged update recovers the dual that produced the step
    Lam_back = (B - B_next) / tau - prob.grad_B_F(x0, B)
    assert np.allclose(Lam_back, Lam, atol=1e-13)


def test_step_Lambda_zero_fixed_point():
    reg = WRegularizer(0.05)
    B = np.zeros((3, 2))
    Lam = np.zeros((3, 2))
    out = step_Lambda(reg, B, B, Lam, 0.01)
    assert np.allclose(out, 0.0, atol=0)


def test_step_Lambda_range_and_membership():
    rng = Rng(69)
    reg = WRegularizer(0.05)
    tau = 0.01
    for _ in range(100):
        B = np.asarray(rng.normal(size=(4, 3)))
        B_next = B + np.asarray(rng.normal(size=(4, 3))) * 0.3
        Lam = np.asarray(rng.uniform(-0.05, 0.05, size=(4, 3)))
        out = step_Lambda(reg, B_next, B, Lam, tau)
        assert np.max(np.abs(out)) <= 0.05
        # implied subgradient lands inside the conjugate subdifferential
        G = (2 * B_next - B) + tau * (Lam - out)
        lo, hi = subdiff_conj_bounds(reg, out)
        gap = np.max(np.abs(G - np.clip(G, lo, hi)))
        assert gap <= 1e-10


def test_run_single_iteration_returns_R2():
    rng = Rng(70)
    prob, x0 = toy_problem(rng)
    params = StoMParams(eta=0.05, alpha=0.0, beta=0.0, tau=0.01, batch="full")
    res = run(prob, "stom", params, 1, Rng(2), x0, sigma_probe=None)
    assert res.R == 2
    assert len(res.rows) == 1
    assert np.array_equal(res.x_R, res.x)


def test_run_fixed_seed_bit_identical():
    rng = Rng(71)
    prob, x0 = toy_problem(rng)
    params = StoMParams(eta=0.05, alpha=0.3, beta=0.3, tau=0.01, batch=3)
    a = run(prob, "stom", params, 25, Rng(9), x0, sigma_probe=None)
    b = run(prob, "stom", params, 25, Rng(9), x0, sigma_probe=None)
    assert np.array_equal(a.x, b.x)
    assert a.R == b.R
    for ra, rb in zip(a.rows, b.rows):
        assert ra == rb


def test_run_full_batch_stom_converges_on_toy():
    # convex decoupled toy: stationarity head toward zero, dual stays feasible
    rng = Rng(72)
    prob, x0 = toy_problem(rng, n=5, d=3, gamma=5.0, lam=0.05)
    params = StoMParams(eta=0.2, alpha=0.0, beta=0.0, tau=0.2, batch="full")
    res = run(prob, "stom", params, 400, Rng(3), x0, sigma_probe=None)
    totals = [r.dx_sq + r.dB_sq + r.dLam_sq for r in res.rows]
    assert totals[-1] < 1e-6 * max(totals[9], 1e-30) or totals[-1] < 1e-18
    run_min = np.minimum.accumulate(totals)
    assert np.all(np.diff(run_min) <= 1e-18)


def test_run_matches_hand_rolled_gd_bit_level():
    rng = Rng(73)
    prob, x0 = toy_problem(rng)
    tau, eta = 0.05, 0.1
    params = StoMParams(eta=eta, alpha=0.0, beta=0.0, tau=tau, batch="full")
    res = run(prob, "stom", params, 15, Rng(4), x0, sigma_probe=None)

    x = np.array(x0)
    B = prob.codes(x).copy()
    Lam = np.zeros_like(B)
    reg = prob.reg
    for _ in range(15):
        x_next = x - eta * prob.grad_x_F(x, B)
        B_next = step_B(prob, x_next, B, Lam, tau)
        Lam = step_Lambda(reg, B_next, B, Lam, tau)
        x, B = x_next, B_next
    assert np.array_equal(res.x, x)
    assert np.array_equal(res.B, B)
    assert np.array_equal(res.Lam, Lam)


def test_run_divergence_guard():
    rng = Rng(74)
    prob, x0 = toy_problem(rng, with_drift=True)
    params = StoMParams(eta=1e9, alpha=0.0, beta=0.0, tau=0.01, batch="full")
    with pytest.raises(DivergenceError):
        run(prob, "stom", params, 50, Rng(5), x0, sigma_probe=None)


def test_lyapunov_constant_trajectory_equals_lagrangian():
    cfg = LyapunovConfig(L_F=2.0, tau=0.05, eta=0.1, alpha=0.3, beta=0.3)
    x = np.ones(4)
    B = np.ones((2, 2))
    val = lyapunov_value(cfg, 1.234, (x, x, x), (B, B, B))
    assert val == pytest.approx(1.234)


def test_lyapunov_theory_config_positive():
    L_F = 2.0
    params = StoMParams.from_theory(L_F, alpha=0.3, beta=0.3)
    cfg = LyapunovConfig(
        L_F=L_F, tau=params.tau, eta=params.eta, alpha=params.alpha, beta=params.beta
    )
    assert cfg.validate() == []
    assert cfg.C_B > 0 and cfg.C_x > 0
    assert cfg.C_B == pytest.approx(0.5 * (cfg.K2 - cfg.K3 - cfg.K1))


def test_lyapunov_invalid_tau_flagged():
    L_F = 2.0
    tau_bad = 2.0 * TAU_LF_BOUND / L_F  # double the positivity bound
    cfg = LyapunovConfig(L_F=L_F, tau=tau_bad, eta=0.01, alpha=0.3, beta=0.3)
    assert "C_B > 0" in cfg.validate()


def test_stom_params_tau_budget_check():
    with pytest.raises(ConfigError):
        StoMParams(eta=0.1, tau=1.0, L_F=2.0)  # tau > sqrt(delta_tilde)/L_F
    StoMParams(eta=0.1, tau=1.0, L_F=2.0, delta_tilde=16.0)  # widened budget


def test_storm_schedule_construction():
    p = StoRMParams.from_schedule(T=1000, L_F=2.0, eta=0.25, rho=1.0, c_b=3.0, batch=16)
    assert 0 < p.rho <= 1
    assert p.batch_init == 30
    with pytest.raises(ConfigError):
        StoRMParams.from_schedule(T=1000, L_F=2.0, eta=0.9)


def test_baselines_zero_reg_weight_coincide():
    rng = Rng(75)
    prob, x, _ = small_random_problem(rng, n=12, classes=3)
    params = BaselineParams(eta=0.05, momentum=0.4, batch=4, reg_weight=0.0)
    a = run_baseline(prob, "sgdm", params, 30, Rng(11), x)
    b = run_baseline(prob, "dhn", params, 30, Rng(11), x)
    assert np.array_equal(a.x, b.x)


def test_baseline_large_weight_shrinks_quantization_error():
    rng = Rng(76)
    prob, x, _ = small_random_problem(rng, n=12, classes=3)
    weak = run_baseline(
        prob, "sgdm", BaselineParams(eta=0.05, momentum=0.4, batch=4, reg_weight=0.0),
        300, Rng(12), x,
    )
    strong = run_baseline(
        prob, "sgdm", BaselineParams(eta=0.05, momentum=0.4, batch=4, reg_weight=30.0),
        300, Rng(12), x,
    )
    q_weak = weak.rows[-1].quant_error
    q_strong = strong.rows[-1].quant_error
    assert q_strong < q_weak


def test_baseline_deterministic():
    rng = Rng(77)
    prob, x, _ = small_random_problem(rng, n=12, classes=3)
    params = BaselineParams(eta=0.05, momentum=0.9, batch=4, reg_weight=1.0, tau_B=0.3)
    for variant in ("sgdm", "spgd-wcr", "dhn"):
        a = run_baseline(prob, variant, params, 20, Rng(13), x)
        b = run_baseline(prob, variant, params, 20, Rng(13), x)
        assert np.array_equal(a.x, b.x)


def test_baseline_wcr_inert_when_gamma_tiny():
    rng = Rng(78)
    prob, x, _ = small_random_problem(rng, n=12, classes=3, gamma=1e-12)
    params = BaselineParams(eta=0.05, momentum=0.4, batch=4, reg_weight=0.0)
    wcr = run_baseline(prob, "spgd-wcr", params, 30, Rng(14), x)
    plain = run_baseline(prob, "sgdm", params, 30, Rng(14), x)
    assert np.allclose(wcr.x, plain.x, atol=1e-8)


def test_stom_nesterov_form_z_equals_y():
    # alpha = beta: the gradient is evaluated at the same extrapolated point
    # the step starts from
    rng = Rng(80)
    prob, x0 = toy_problem(rng)
    params = StoMParams(eta=0.1, alpha=0.6, beta=0.6, tau=0.01, batch="full")
    state = fresh_state(prob, x0)
    state["x_prev"] = x0 - 0.15
    x_next, _, _ = step_x_stom(prob, state, params, Rng(0))
    y = x0 + 0.6 * (x0 - state["x_prev"])
    expect = y - 0.1 * prob.grad_x_F(y, state["B"])
    assert np.allclose(x_next, expect, atol=0)


def test_dual_increment_bound_holds_on_recorded_run():
    # record a short run and check the dual-increment inequality with the
    # power-iteration smoothness estimate
    rng = Rng(81)
    prob, x, _ = small_random_problem(rng, n=12, classes=3)
    B = prob.codes(x).copy()
    Lam = np.zeros_like(B)
    tau = 0.1
    L_F = prob.estimate_L_F(x, B, rng.split(), probe=12)
    states = [(x.copy(), B.copy(), Lam.copy())]
    for _ in range(15):
        x = x - 0.05 * prob.grad_x_F(x, B)
        B_next = step_B(prob, x, B, Lam, tau)
        Lam = step_Lambda(prob.reg, B_next, B, Lam, tau)
        B = B_next
        states.append((x.copy(), B.copy(), Lam.copy()))
    from dualhash.problem import dual_increment_bound_check

    out = dual_increment_bound_check(states, tau=tau, L_F=L_F)
    assert all(ok for ok, _, _ in out)


def test_storm_variance_reduction_on_small_problem():
    # stochastic mode: mean squared estimator error beats the plain
    # mini-batch estimator's at matched batch size
    rng = Rng(79)
    prob, x, _ = small_random_problem(rng, n=30, classes=3, d_a=6)
    params = StoRMParams(eta=0.01, rho=0.05, tau=0.01, batch=5)
    res = run(
        prob, "storm", params, 150, Rng(15), x,
        sigma_probe=None, probe_estimator=True,
    )
    e = res.probes["e_sq"][30:]
    p = res.probes["plain_sq"][30:]
    assert e.mean() < p.mean()
