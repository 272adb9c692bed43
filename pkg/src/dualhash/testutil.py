"""Shared fixtures for the verify command and the test suite."""

import numpy as np

from . import model as mdl
from .data import build_pairs, gen_gaussian_clusters, TRAIN
from .problem import HashingProblem
from .regularizer import WRegularizer


def small_random_problem(
    rng, n=12, classes=3, d_a=5, hidden=(7,), d=4, gamma=3.0, lam=0.05, alpha=0.5
):
    """Tiny random hashing problem plus a random (x, B) evaluation point."""
    per_class = n // classes
    ds = gen_gaussian_clusters(rng, classes, per_class, d_a, spread=0.4)
    X, labels = ds.subset(TRAIN)
    pi, pj, ps = build_pairs(labels, mode="all")
    loss = mdl.PairwiseLossSpec(pi, pj, ps, alpha=alpha)
    net = mdl.MlpSpec((d_a, *hidden, d))
    prob = HashingProblem(X, loss, net, gamma=gamma, reg=WRegularizer(lam))
    x = mdl.init_params(net, rng)
    B = np.asarray(rng.uniform(-1.2, 1.2, size=(X.shape[0], d)))
    return prob, x, B


def central_diff_grad(f, x, eps=1e-6):
    """Dense central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return g


def rel_fd_error(f, grad, x, eps=1e-6):
    """Relative error between an analytic gradient and central differences."""
    g = np.asarray(grad(x), dtype=np.float64)
    fd = central_diff_grad(f, x, eps)
    denom = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
    return float(np.linalg.norm(g - fd) / denom)
