"""Experiment runner: seeded end-to-end training, baseline comparison, and
self-verification, driven by one YAML config tree.

Every config key can be overridden by an environment variable with the
DUALHASH_ prefix and double-underscore path separators, e.g.
DUALHASH_PROBLEM__GAMMA=5.  Exit codes: 0 ok, 2 bad config, 3 diverged run.
"""

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from . import data as dat
from . import metrics as met
from . import model as mdl
from . import optimizer as opt
from .exceptions import ConfigError, DivergenceError, DomainError
from .numerics import Rng
from .problem import HashingProblem, LinearDecoupledProblem
from .regularizer import (
    WRegularizer,
    WeaklyConvexRegularizer,
    prox_conj,
    prox_h,
    prox_oracle,
    prox_wc,
)

ENV_PREFIX = "DUALHASH_"
VARIANTS = ("dualhash-stom", "dualhash-storm", "sgdm", "spgd-wcr", "dhn")

DEFAULT_CONFIG = {
    "variant": "dualhash-stom",
    "seed": 0,
    "out_dir": "runs/out",
    "dataset": {
        "classes": 10,
        "per_class_train": 100,
        "per_class_query": 20,
        "feature_dim": 16,
        "spread": 0.35,
        "multi_label": False,
        "pair_mode": "sampled",
        "pairs_per_anchor": 5,
    },
    "model": {"hidden": [32], "code_bits": 8},
    "loss": {"alpha": 0.5},
    "problem": {"gamma": 3.0, "lambda": 0.05},
    "optimizer": {
        "T": 2000,
        "tau": 0.01,
        "eta": 0.01,
        "alpha": 0.905,
        "beta": 0.905,
        "batch": 32,
        "rho": 1.0,
        "c_b": 3.0,
        "batch_init": None,
        "delta_tilde": None,
        "momentum": 0.905,
        "reg_weight": 1.0,
        "tau_B": 0.5,
        "B_init": "codes",
        "estimate_L_F": True,
    },
    "logging": {"log_every": None, "heavy_every": 10, "sigma_probe": 128},
    "eval": {"top_n": None, "radius": 2},
}

# Desk-scale settings for the canonical 10-class / 1000-sample problem,
# frozen from a per-variant grid search at this problem size.
CANONICAL_DATASET = {
    "classes": 10,
    "per_class_train": 100,
    "per_class_query": 20,
    "feature_dim": 16,
    "spread": 0.05,
    "multi_label": False,
    "pair_mode": "sampled",
    "pairs_per_anchor": 16,
}
CANONICAL_OPTIMIZER = {
    "dualhash-stom": {"tau": 0.1, "eta": 0.01, "alpha": 0.905, "beta": 0.905, "batch": 32},
    "dualhash-storm": {"tau": 0.1, "eta": 0.25, "rho": 1.0, "c_b": 3.0, "batch": 32},
    "sgdm": {"eta": 0.02, "momentum": 0.905, "batch": 64, "reg_weight": 0.3},
    "dhn": {"eta": 0.02, "momentum": 0.905, "batch": 64, "reg_weight": 0.3},
    "spgd-wcr": {"eta": 0.02, "momentum": 0.905, "batch": 64, "tau_B": 0.5, "reg_weight": 1.0},
}
CANONICAL_GAMMA = 50.0


def canonical_config(variant="dualhash-stom", **overrides):
    """The tuned canonical experiment for a given solver variant."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    cfg["variant"] = variant
    cfg["dataset"].update(CANONICAL_DATASET)
    cfg["loss"]["alpha"] = 1.0
    cfg["problem"]["gamma"] = CANONICAL_GAMMA
    cfg["optimizer"].update(CANONICAL_OPTIMIZER[variant])
    cfg = _deep_merge(cfg, overrides)
    validate_config(cfg)
    return cfg


# -- config handling ----------------------------------------------------------


def _deep_merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _apply_env(cfg, env):
    for key, raw in sorted(env.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX) :].lower().split("__")
        node = cfg
        for part in path[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"env override {key}: unknown section {part!r}")
            node = node[part]
        if path[-1] not in node:
            raise ConfigError(f"env override {key}: unknown key {path[-1]!r}")
        node[path[-1]] = yaml.safe_load(raw)
    return cfg


def load_config(path=None, env=None, overrides=None):
    """Defaults <- file <- env <- explicit overrides, then validation."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as f:
            user = yaml.safe_load(f) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path} must hold a mapping at top level")
        for key in user:
            if key not in cfg:
                raise ConfigError(f"unknown config section {key!r}")
        cfg = _deep_merge(cfg, user)
    cfg = _apply_env(cfg, env if env is not None else os.environ)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["variant"] not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {cfg['variant']!r}")
    ds = cfg["dataset"]
    if ds["classes"] < 2 or ds["per_class_train"] < 1:
        raise ConfigError("dataset needs classes >= 2 and per_class_train >= 1")
    if ds["pair_mode"] not in ("all", "sampled"):
        raise ConfigError("pair_mode must be 'all' or 'sampled'")
    if cfg["problem"]["gamma"] <= 0:
        raise ConfigError("problem.gamma must be positive")
    if cfg["problem"]["lambda"] <= 0:
        raise ConfigError("problem.lambda must be positive")
    o = cfg["optimizer"]
    if o["T"] < 1:
        raise ConfigError("optimizer.T must be >= 1")
    if o["tau"] <= 0 or o["eta"] <= 0:
        raise ConfigError("optimizer.tau and optimizer.eta must be positive")
    if o["batch"] != "full" and (not isinstance(o["batch"], int) or o["batch"] < 1):
        raise ConfigError("optimizer.batch must be a positive integer or 'full'")
    if o["B_init"] not in ("codes", "sign"):
        raise ConfigError("optimizer.B_init must be 'codes' or 'sign'")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")


# -- experiment assembly ------------------------------------------------------


@dataclass
class Experiment:
    cfg: dict
    dataset: object
    problem: object
    x0: np.ndarray
    solver_rng: object
    L_F: float
    lyap: object


def build_experiment(cfg):
    """Deterministically construct dataset, problem, and init from cfg."""
    root = Rng(cfg["seed"])
    data_rng = root.split()
    pair_rng = root.split()
    init_rng = root.split()
    solver_rng = root.split()
    probe_rng = root.split()

    ds_cfg = cfg["dataset"]
    ds = dat.gen_gaussian_clusters(
        data_rng,
        classes=ds_cfg["classes"],
        per_class=ds_cfg["per_class_train"],
        d_a=ds_cfg["feature_dim"],
        spread=ds_cfg["spread"],
        per_class_query=ds_cfg["per_class_query"],
        multi_label=ds_cfg["multi_label"],
    )
    train_X, train_labels = ds.subset(dat.TRAIN)
    pi, pj, ps = dat.build_pairs(
        train_labels,
        mode=ds_cfg["pair_mode"],
        rng=pair_rng,
        per_anchor=ds_cfg["pairs_per_anchor"],
    )
    loss_spec = mdl.PairwiseLossSpec(pi, pj, ps, alpha=cfg["loss"]["alpha"])
    widths = (
        [ds_cfg["feature_dim"]] + list(cfg["model"]["hidden"]) + [cfg["model"]["code_bits"]]
    )
    net = mdl.MlpSpec(tuple(widths))
    problem = HashingProblem(
        train_X,
        loss_spec,
        net,
        gamma=cfg["problem"]["gamma"],
        reg=WRegularizer(cfg["problem"]["lambda"]),
        labels=train_labels,
    )
    x0 = mdl.init_params(net, init_rng)

    L_F = None
    if cfg["variant"] in ("dualhash-stom", "dualhash-storm") and cfg["optimizer"].get(
        "estimate_L_F", True
    ):
        B0 = problem.codes(x0)
        L_F = problem.estimate_L_F(x0, B0, probe_rng)
    return Experiment(cfg, ds, problem, x0, solver_rng, L_F, None)


def _lyapunov_candidate(cfg, L_F, params):
    """A LyapunovConfig for diagnostics when the positivity system holds."""
    if L_F is None:
        return None
    variant = "stom" if cfg["variant"] == "dualhash-stom" else "storm"
    cand = opt.LyapunovConfig(
        L_F=L_F,
        tau=params.tau,
        eta=params.eta,
        alpha=getattr(params, "alpha", 0.0),
        beta=getattr(params, "beta", 0.0),
        variant=variant,
    )
    return cand if not cand.validate() else None


def make_params(cfg, L_F=None):
    o = cfg["optimizer"]
    variant = cfg["variant"]
    if variant == "dualhash-stom":
        return opt.StoMParams(
            eta=o["eta"],
            alpha=o["alpha"],
            beta=o["beta"],
            tau=o["tau"],
            batch=o["batch"],
            delta_tilde=o["delta_tilde"] or opt.default_delta_tilde(),
            L_F=None,  # tau/L_F budget is asserted only in theory mode
        )
    if variant == "dualhash-storm":
        # eta/rho/c_b are the horizon-free schedule constants; the actual
        # step and momentum follow the T^(1/3) / T^(2/3) scaling
        if L_F is None:
            raise ConfigError(
                "the recursive-momentum schedule needs an L_F estimate; "
                "enable optimizer.estimate_L_F"
            )
        return opt.StoRMParams.from_schedule(
            T=o["T"],
            L_F=L_F,
            eta=o["eta"],
            rho=o["rho"],
            c_b=o["c_b"],
            batch=o["batch"],
            tau=o["tau"],
        )
    return opt.BaselineParams(
        eta=o["eta"],
        momentum=o["momentum"],
        batch=o["batch"],
        reg_weight=o["reg_weight"],
        tau_B=o["tau_B"],
    )


def execute(cfg):
    """Run one experiment; returns (RunResult, RetrievalReport, Experiment)."""
    exp = build_experiment(cfg)
    params = make_params(cfg, exp.L_F)
    o, lg = cfg["optimizer"], cfg["logging"]
    if cfg["variant"] in ("dualhash-stom", "dualhash-storm"):
        exp.lyap = _lyapunov_candidate(cfg, exp.L_F, params)
        result = opt.run(
            exp.problem,
            "stom" if cfg["variant"] == "dualhash-stom" else "storm",
            params,
            o["T"],
            exp.solver_rng,
            exp.x0,
            log_every=lg["log_every"],
            heavy_every=lg["heavy_every"],
            sigma_probe=lg["sigma_probe"],
            lyap=exp.lyap,
            B_init=o["B_init"],
        )
    else:
        result = opt.run_baseline(
            exp.problem,
            cfg["variant"],
            params,
            o["T"],
            exp.solver_rng,
            exp.x0,
            log_every=lg["log_every"],
            heavy_every=lg["heavy_every"],
        )
    q_X, q_labels = exp.dataset.subset(dat.QUERY)
    db_X, db_labels = exp.dataset.subset(dat.TRAIN)
    U_db = exp.problem.codes(result.x)
    U_q = mdl.forward(exp.problem.net, result.x, q_X)
    report = met.evaluate_retrieval(
        U_db,
        db_labels,
        U_q,
        q_labels,
        top_n=cfg["eval"]["top_n"],
        radius=cfg["eval"]["radius"],
    )
    return result, report, exp


# -- artifact writing ---------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_diagnostics_csv(path, rows):
    with open(path, "w") as f:
        f.write(",".join(opt.DiagnosticsRecord.FIELDS) + "\n")
        for r in rows:
            f.write(",".join(_fmt(getattr(r, name)) for name in r.FIELDS) + "\n")


def write_curves(out_dir, report):
    with open(os.path.join(out_dir, "pr_curve.csv"), "w") as f:
        f.write("recall,precision\n")
        for rec, prec in report.pr_curve:
            f.write(f"{_fmt(rec)},{_fmt(prec)}\n")
    with open(os.path.join(out_dir, "ap_topk.csv"), "w") as f:
        f.write("k,precision\n")
        for k, prec in report.ap_at_topk:
            f.write(f"{k},{_fmt(prec)}\n")
    with open(os.path.join(out_dir, "hamming_hist.csv"), "w") as f:
        f.write("distance,intra,inter\n")
        for d, (a, b) in enumerate(zip(report.intra_hist, report.inter_hist)):
            f.write(f"{d},{_fmt(a)},{_fmt(b)}\n")


def cmd_run(config_path, seed=None, out=None, threads=None, env=None):
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out_dir"] = out
    cfg = load_config(config_path, env=env, overrides=overrides)
    t0 = time.time()
    result, report, exp = execute(cfg)
    wall = time.time() - t0

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), result.rows)
    report.to_json(os.path.join(out_dir, "report.json"))
    write_curves(out_dir, report)
    with open(os.path.join(out_dir, "config_echo.yaml"), "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)
    runlog = {
        "wall_clock_s": wall,
        "rows": len(result.rows),
        "returned_iterate_R": result.R,
        "lambda_max": result.lambda_max,
        "dual_identity_max": result.dual_identity_max,
        "L_F_estimate": exp.L_F,
        "variant": cfg["variant"],
        "seed": cfg["seed"],
        "map": report.map,
    }
    with open(os.path.join(out_dir, "runlog.json"), "w") as f:
        json.dump(runlog, f, indent=2, default=float)
    return runlog


def _compare_one(payload):
    cfg, seed = payload
    cfg = copy.deepcopy(cfg)
    cfg["seed"] = seed
    try:
        result, report, _ = execute(cfg)
        return {
            "ok": True,
            "map": report.map,
            "ap_r2": report.ap_at_r2,
            "quant": report.quant_error,
        }
    except Exception as e:  # failures become table markers, not crashes
        return {"ok": False, "error": f"{type(e).__name__}: {e}"}


def cmd_compare(config_paths, seeds, out_path, threads=1, env=None):
    if len(config_paths) < 2:
        raise ConfigError("compare needs at least two configs")
    jobs = []
    labels = []
    for path in config_paths:
        cfg = load_config(path, env=env)
        for seed in seeds:
            jobs.append((cfg, seed))
            labels.append((path, cfg["variant"], seed))
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            outcomes = list(ex.map(_compare_one, jobs))
    else:
        outcomes = [_compare_one(j) for j in jobs]

    lines = ["config,variant,seeds,map_mean,map_std,ap_r2_mean,ap_r2_std,quant_mean,quant_std,failures"]
    by_cfg = {}
    for (path, variant, seed), outcome in zip(labels, outcomes):
        by_cfg.setdefault((path, variant), []).append(outcome)
    for (path, variant), outs in by_cfg.items():
        good = [o for o in outs if o["ok"]]
        fails = len(outs) - len(good)
        if good:
            stats = []
            for key in ("map", "ap_r2", "quant"):
                vals = np.array([o[key] for o in good])
                stats += [vals.mean(), vals.std()]
            row = [path, variant, str(len(outs))] + [_fmt(float(s)) for s in stats]
        else:
            row = [path, variant, str(len(outs))] + ["FAILED"] * 6
        lines.append(",".join(row + [str(fails)]))
    table = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as f:
            f.write(table)
    return table


# -- verification suites ------------------------------------------------------


def _suite_prox_oracle(rng, trials=300, tol=1e-6):
    worst = 0.0
    for _ in range(trials):
        lam = float(rng.uniform(1e-3, 1.0))
        tau = float(rng.uniform(1e-3, 1.0))
        y = float(rng.uniform(-2.5, 2.5))
        reg = WRegularizer(lam)
        got = prox_conj(reg, np.array([y]), tau)[0]
        ref = prox_oracle(
            lambda v, lam=lam: abs(v) if abs(v) <= lam else math.inf, y, tau
        )
        worst = max(worst, abs(got - ref))
        got_h = prox_h(reg, np.array([y]), tau)[0]
        ref_h = prox_oracle(lambda v, lam=lam: lam * abs(abs(v) - 1.0), y, tau)
        worst = max(worst, abs(got_h - ref_h))
        if 2.0 * lam * tau < 0.95:
            wreg = WeaklyConvexRegularizer(lam)
            got_wc = prox_wc(wreg, np.array([y]), tau)[0]
            ref_wc = prox_oracle(lambda v, lam=lam: lam * abs(v * v - 1.0), y, tau)
            worst = max(worst, abs(got_wc - ref_wc))
    return worst <= tol, f"max |prox - oracle| = {worst:.3g} (tol {tol})"


def _suite_gradients(rng, instances=5, tol=1e-5):
    from .testutil import small_random_problem, rel_fd_error

    worst = 0.0
    for _ in range(instances):
        prob, x, B = small_random_problem(rng)
        worst = max(
            worst,
            rel_fd_error(lambda v: prob.F_value(v, B), lambda v: prob.grad_x_F(v, B), x),
        )
        gB = prob.grad_B_F(x, B)
        worst = max(
            worst,
            rel_fd_error(
                lambda M: prob.F_value(x, M.reshape(B.shape)),
                lambda M: prob.grad_B_F(x, M.reshape(B.shape)).reshape(-1),
                B.reshape(-1),
            ),
        )
        del gB
    return worst <= tol, f"max relative FD error = {worst:.3g} (tol {tol})"


def _suite_kkt(rng, tol=1e-10):
    prob, x, B, Lam = LinearDecoupledProblem.with_critical_point(
        n=6, d=4, gamma=3.0, lam=0.05, v=0.02, rng=rng
    )
    total = prob.stationarity(x, B, Lam).total
    return total < tol, f"stationarity total at constructed triple = {total:.3g}"


def _suite_lyapunov(lam, gamma, tau):
    if lam <= 0 or gamma <= 0 or tau <= 0:
        return False, f"invalid parameters lam={lam} gamma={gamma} tau={tau}"
    L_F = 2.0
    params = opt.StoMParams.from_theory(L_F)
    cfg = opt.LyapunovConfig(
        L_F=L_F, tau=params.tau, eta=params.eta, alpha=params.alpha, beta=params.beta
    )
    bad = cfg.validate()
    return not bad, "positivity violations: " + (", ".join(bad) if bad else "none")


def cmd_verify(config_path=None, env=None):
    lam, gamma, tau = 0.05, 3.0, 0.01
    if config_path is not None:
        try:
            cfg = load_config(config_path, env=env)
            lam = cfg["problem"]["lambda"]
            gamma = cfg["problem"]["gamma"]
            tau = cfg["optimizer"]["tau"]
        except ConfigError as e:
            # feed the raw values to the suites so bad configs fail visibly
            with open(config_path) as f:
                raw = yaml.safe_load(f) or {}
            lam = raw.get("problem", {}).get("lambda", lam)
            gamma = raw.get("problem", {}).get("gamma", gamma)
            tau = raw.get("optimizer", {}).get("tau", tau)

    rng = Rng(20240811)
    suites = {}
    try:
        ok, detail = _suite_prox_oracle(rng.split())
    except Exception as e:
        ok, detail = False, f"{type(e).__name__}: {e}"
    suites["prox_oracle"] = {"passed": bool(ok), "detail": detail}
    try:
        ok, detail = _suite_gradients(rng.split())
    except Exception as e:
        ok, detail = False, f"{type(e).__name__}: {e}"
    suites["gradients"] = {"passed": bool(ok), "detail": detail}
    try:
        ok, detail = _suite_kkt(rng.split())
    except Exception as e:
        ok, detail = False, f"{type(e).__name__}: {e}"
    suites["kkt"] = {"passed": bool(ok), "detail": detail}
    try:
        ok, detail = _suite_lyapunov(lam, gamma, tau)
    except Exception as e:
        ok, detail = False, f"{type(e).__name__}: {e}"
    suites["lyapunov_positivity"] = {"passed": bool(ok), "detail": detail}

    all_passed = all(s["passed"] for s in suites.values())
    return {"suites": suites, "all_passed": all_passed}


# -- entry point ---------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dualhash")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train once and write artifacts")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=None)

    p_cmp = sub.add_parser("compare", help="run several configs over a seed list")
    p_cmp.add_argument("--config", action="append", required=True)
    p_cmp.add_argument("--seeds", default="0")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--threads", type=int, default=1)

    p_ver = sub.add_parser("verify", help="run the built-in oracle suites")
    p_ver.add_argument("--config", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            runlog = cmd_run(args.config, seed=args.seed, out=args.out, threads=args.threads)
            print(json.dumps(runlog, indent=2, default=float))
            return 0
        if args.command == "compare":
            seeds = [int(s) for s in str(args.seeds).split(",") if s != ""]
            table = cmd_compare(args.config, seeds, args.out, threads=args.threads)
            print(table, end="")
            return 0
        if args.command == "verify":
            summary = cmd_verify(args.config)
            for name, s in summary["suites"].items():
                print(f"{'PASS' if s['passed'] else 'FAIL'} {name}: {s['detail']}")
            print(json.dumps(summary, indent=2))
            return 0 if summary["all_passed"] else 1
    except (ConfigError, DomainError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DivergenceError as e:
        print(f"run aborted: {e}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
