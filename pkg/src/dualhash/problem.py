"""Composite objective F(x, B) = loss + coupling penalty, its Lagrangian,
full and mini-batch gradients, and the blockwise stationarity measure.

Per-sample shares F_j split each pair's loss gradient half-and-half between
its endpoints, so the average of the n shares reproduces the full gradient
exactly and uniform sampling gives an unbiased estimator.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .exceptions import ConfigError, DimensionError, DualInfeasibleError
from .numerics import frob_norm_sq, sample_indices
from .regularizer import (
    WRegularizer,
    h_conj_value,
    h_value,
    logcosh_reg,
    subdiff_conj_bounds,
    w_subgradient,
)


@dataclass
class StationarityBreakdown:
    """Squared norms of the three Lagrangian-subgradient blocks."""

    dx_sq: float
    dB_sq: float
    dLam_sq: float

    @property
    def total(self):
        return self.dx_sq + self.dB_sq + self.dLam_sq


class HashingProblem:
    """Pairwise-loss hashing objective with quadratic code coupling.

    F(x, B) = mean pair cross-entropy of U = D(x) plus
    gamma/(2n) * sum_i ||D_i(x) - b_i||^2; the W-regularizer enters only
    through the dual updates of the solvers.
    """

    def __init__(self, features, loss_spec, net_spec, gamma, reg, labels=None):
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 2:
            raise ConfigError("need a (n>=2, d_a) feature matrix")
        self.loss = loss_spec
        self.net = net_spec
        if not (gamma > 0):
            raise ConfigError(f"penalty weight must be positive, got {gamma}")
        self.gamma = float(gamma)
        if not isinstance(reg, WRegularizer):
            raise ConfigError("problem needs a WRegularizer")
        self.reg = reg
        self.labels = labels
        n = self.features.shape[0]
        if np.max(self.loss.pairs_i) >= n or np.max(self.loss.pairs_j) >= n:
            raise ConfigError("pair indices exceed the sample count")
        self.n = n
        # per-sample adjacency into the pair list, for per-sample gradients
        by_sample = [[] for _ in range(n)]
        for p in range(self.loss.n_pairs):
            by_sample[self.loss.pairs_i[p]].append(p)
            by_sample[self.loss.pairs_j[p]].append(p)
        self._pairs_of = [np.asarray(v, dtype=np.int64) for v in by_sample]

    @property
    def d(self):
        return self.net.out_dim

    def codes(self, x):
        return mdl.forward(self.net, x, self.features)

    # -- values -------------------------------------------------------------

    def f_value(self, x, U=None):
        if U is None:
            U = self.codes(x)
        value, _ = mdl.pairwise_loss(self.loss, U)
        return value

    def penalty_value(self, x, B, U=None):
        if U is None:
            U = self.codes(x)
        self._check_B(B)
        return self.gamma / (2.0 * self.n) * frob_norm_sq(U - B)

    def F_value(self, x, B, U=None):
        if U is None:
            U = self.codes(x)
        return self.f_value(x, U) + self.penalty_value(x, B, U)

    def objective_value(self, x, B):
        """Full split objective F(x, B) + h(B)."""
        return self.F_value(x, B) + h_value(self.reg, B)

    def lagrangian_value(self, x, B, Lam):
        """F + <B, Lam> - h*(Lam); raises if Lam is dual-infeasible."""
        self._check_B(Lam)
        conj = h_conj_value(self.reg, Lam)
        if math.isinf(conj):
            raise DualInfeasibleError("dual iterate outside [-lam, lam]")
        return self.F_value(x, B) + float(np.sum(B * Lam)) - conj

    # -- gradients ----------------------------------------------------------

    def grad_B_F(self, x, B, U=None):
        """(gamma/n) * (B - D(x)) rowwise; independent of the dual."""
        if U is None:
            U = self.codes(x)
        self._check_B(B)
        return (self.gamma / self.n) * (B - U)

    def grad_x_F(self, x, B, idx=None):
        """Mini-batch estimator of grad_x F; idx=None means the exact full
        gradient (every sample exactly once).

        Each sampled j contributes its per-sample share: half of every
        incident pair's loss gradient (scaled so shares average to f) plus
        its own penalty term.
        """
        self._check_B(B)
        if idx is None:
            idx = np.arange(self.n)
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            raise ConfigError("empty index batch")
        counts = np.bincount(idx, minlength=self.n).astype(np.float64)

        U, cache = mdl.forward_cached(self.net, x, self.features)
        _, slopes = mdl.pair_loss_terms(self.loss, U)
        pi, pj = self.loss.pairs_i, self.loss.pairs_j
        # pair weight: (multiplicity of either endpoint) * n / (2 |S|)
        w = (counts[pi] + counts[pj]) * (self.n / (2.0 * self.loss.n_pairs)) * slopes
        V = np.zeros_like(U)
        np.add.at(V, pi, 0.5 * w[:, None] * U[pj])
        np.add.at(V, pj, 0.5 * w[:, None] * U[pi])
        V += (counts[:, None] * self.gamma) * (U - B)
        return mdl.backward(self.net, x, self.features, V, cache) / idx.size

    def grad_x_composition(self, x, idx, reg_weight, kind):
        """Mini-batch gradient of f + reg_weight * (1/n) sum_j r(D_j(x)).

        kind 'w_subgrad' uses a sign subgradient of the W-penalty at the
        network output (the direct subgradient route); 'logcosh' uses the
        smooth surrogate's exact gradient.
        """
        if idx is None:
            idx = np.arange(self.n)
        idx = np.asarray(idx, dtype=np.int64)
        counts = np.bincount(idx, minlength=self.n).astype(np.float64)

        U, cache = mdl.forward_cached(self.net, x, self.features)
        _, slopes = mdl.pair_loss_terms(self.loss, U)
        pi, pj = self.loss.pairs_i, self.loss.pairs_j
        w = (counts[pi] + counts[pj]) * (self.n / (2.0 * self.loss.n_pairs)) * slopes
        V = np.zeros_like(U)
        np.add.at(V, pi, 0.5 * w[:, None] * U[pj])
        np.add.at(V, pj, 0.5 * w[:, None] * U[pi])
        if reg_weight > 0:
            if kind == "w_subgrad":
                R = w_subgradient(self.reg, U)
            elif kind == "logcosh":
                _, R = logcosh_reg(U)
                R = R * self.reg.lam
            else:
                raise ConfigError(f"unknown composition regularizer {kind!r}")
            V += (counts[:, None] * reg_weight) * R
        return mdl.backward(self.net, x, self.features, V, cache) / idx.size

    def composition_value(self, x, reg_weight, kind):
        """Value matching grad_x_composition."""
        U = self.codes(x)
        base = self.f_value(x, U)
        if reg_weight <= 0:
            return base
        if kind == "w_subgrad":
            r = h_value(self.reg, U)
        elif kind == "logcosh":
            v, _ = logcosh_reg(U)
            r = self.reg.lam * v
        else:
            raise ConfigError(f"unknown composition regularizer {kind!r}")
        return base + reg_weight * r / self.n

    def grad_x_F_sample(self, x, B, j, U=None, cache=None):
        """Exact per-sample share gradient grad_x F_j (used by diagnostics)."""
        if U is None or cache is None:
            U, cache = mdl.forward_cached(self.net, x, self.features)
        _, slopes = mdl.pair_loss_terms(self.loss, U)
        V = np.zeros_like(U)
        ps = self._pairs_of[j]
        if ps.size:
            pi, pj = self.loss.pairs_i[ps], self.loss.pairs_j[ps]
            w = (self.n / (2.0 * self.loss.n_pairs)) * slopes[ps]
            np.add.at(V, pi, 0.5 * w[:, None] * U[pj])
            np.add.at(V, pj, 0.5 * w[:, None] * U[pi])
        V[j] += self.gamma * (U[j] - B[j])
        return mdl.backward(self.net, x, self.features, V, cache)

    # -- diagnostics --------------------------------------------------------

    def stationarity(self, x, B, Lam):
        """Blockwise squared distance of 0 from the Lagrangian subgradient.

        d_x = grad_x F; d_B = grad_B F + Lam; d_Lam projects B onto the
        conjugate subdifferential interval entrywise (minimal-norm choice).
        """
        U = self.codes(x)
        dx = self.grad_x_F(x, B)
        dB = self.grad_B_F(x, B, U) + Lam
        lo, hi = subdiff_conj_bounds(self.reg, Lam)
        gap = B - np.clip(B, lo, hi)
        return StationarityBreakdown(
            float(np.dot(dx, dx)), frob_norm_sq(dB), frob_norm_sq(gap)
        )

    def sigma_hat_sq(self, x, B, probe=None, rng=None):
        """Empirical per-sample gradient variance around the full gradient.

        probe=None is exhaustive; otherwise a uniform subsample of that many
        sample shares estimates the same quantity.
        """
        U, cache = mdl.forward_cached(self.net, x, self.features)
        full = self.grad_x_F(x, B)
        if probe is None or probe >= self.n:
            js = np.arange(self.n)
        else:
            if rng is None:
                raise ConfigError("subsampled variance probe needs an rng")
            js = sample_indices(rng, self.n, probe)
        acc = 0.0
        for j in js:
            g = self.grad_x_F_sample(x, B, int(j), U, cache)
            diff = g - full
            acc += float(np.dot(diff, diff))
        return acc / js.size

    def estimate_L_F(self, x, B, rng, iters=10, probe=256, fd_eps=1e-4):
        """Power-iteration estimate of the joint (x, B) smoothness constant.

        Hessian-vector products are taken by central differences of the
        gradient on a fixed probe batch; returns the largest curvature seen.
        """
        idx = (
            np.arange(self.n)
            if probe >= self.n
            else sample_indices(rng, self.n, probe)
        )
        nx, nB = x.size, B.size

        def grad_joint(xv, Bv):
            gx = self.grad_x_F(xv, Bv, idx)
            gB = self.grad_B_F(xv, Bv)
            return np.concatenate([gx, gB.reshape(-1)])

        v = rng.normal(size=nx + nB)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(iters):
            xp = x + fd_eps * v[:nx]
            xm = x - fd_eps * v[:nx]
            Bp = B + fd_eps * v[nx:].reshape(B.shape)
            Bm = B - fd_eps * v[nx:].reshape(B.shape)
            hv = (grad_joint(xp, Bp) - grad_joint(xm, Bm)) / (2.0 * fd_eps)
            norm = np.linalg.norm(hv)
            if norm == 0.0:
                break
            est = norm
            v = hv / norm
        return max(float(est), 1e-8)

    def _check_B(self, B):
        if B.shape != (self.n, self.d):
            raise DimensionError(
                f"code matrix shape {B.shape}, expected {(self.n, self.d)}"
            )


def dual_increment_bound_check(states, tau, L_F):
    """Check the dual-increment inequality along recorded iterates.

    states: list of (x, B, Lam) triples at consecutive iterations.  For each
    k with k+2 available, tests
    ||Lam_{k+1} - Lam_k||^2 <= 3/tau^2 ||B_{k+2}-B_{k+1}||^2
      + 3 (1/tau + L_F)^2 ||B_{k+1}-B_k||^2 + 3 L_F^2 ||x_{k+2}-x_{k+1}||^2.
    Returns (holds, lhs, rhs) per k; diagnostic only.
    """
    if len(states) < 3:
        raise ConfigError("need at least 3 consecutive iterates")
    out = []
    for k in range(len(states) - 2):
        x1, B1, L1 = states[k]
        _, B2, L2 = states[k + 1]
        x3, B3, _ = states[k + 2]
        lhs = frob_norm_sq(L2 - L1)
        rhs = (
            3.0 / tau**2 * frob_norm_sq(B3 - B2)
            + 3.0 * (1.0 / tau + L_F) ** 2 * frob_norm_sq(B2 - B1)
            + 3.0 * L_F**2 * frob_norm_sq(x3 - states[k + 1][0])
        )
        out.append((lhs <= rhs * (1.0 + 1e-12) + 1e-15, lhs, rhs))
    return out


class LinearDecoupledProblem:
    """Tiny analytic problem with the same interface as HashingProblem.

    The "network" splits x into n blocks of d coordinates (D_i(x) = block i)
    and the loss is linear, f(x) = <c, x> / n.  Critical points can be
    arranged in closed form, which makes it the reference fixture for
    stationarity and solver checks.
    """

    def __init__(self, n, d, gamma, reg, c=None):
        self.n, self.d = int(n), int(d)
        self.gamma = float(gamma)
        self.reg = reg
        self.c = np.zeros(n * d) if c is None else np.asarray(c, dtype=np.float64)

    def n_params(self):
        return self.n * self.d

    def codes(self, x):
        return x.reshape(self.n, self.d)

    def f_value(self, x, U=None):
        return float(np.dot(self.c, x)) / self.n

    def penalty_value(self, x, B, U=None):
        return self.gamma / (2.0 * self.n) * frob_norm_sq(self.codes(x) - B)

    def F_value(self, x, B, U=None):
        return self.f_value(x) + self.penalty_value(x, B)

    def objective_value(self, x, B):
        return self.F_value(x, B) + h_value(self.reg, B)

    def lagrangian_value(self, x, B, Lam):
        conj = h_conj_value(self.reg, Lam)
        if math.isinf(conj):
            raise DualInfeasibleError("dual iterate outside [-lam, lam]")
        return self.F_value(x, B) + float(np.sum(B * Lam)) - conj

    def grad_B_F(self, x, B, U=None):
        return (self.gamma / self.n) * (B - self.codes(x))

    def grad_x_F(self, x, B, idx=None):
        if idx is None:
            idx = np.arange(self.n)
        idx = np.asarray(idx, dtype=np.int64)
        counts = np.bincount(idx, minlength=self.n).astype(np.float64)
        V = (counts[:, None] * self.gamma) * (self.codes(x) - B)
        per_sample_c = self.c.reshape(self.n, self.d) * counts[:, None]
        return (V + per_sample_c).reshape(-1) / idx.size

    def stationarity(self, x, B, Lam):
        dx = self.grad_x_F(x, B)
        dB = self.grad_B_F(x, B) + Lam
        lo, hi = subdiff_conj_bounds(self.reg, Lam)
        gap = B - np.clip(B, lo, hi)
        return StationarityBreakdown(
            float(np.dot(dx, dx)), frob_norm_sq(dB), frob_norm_sq(gap)
        )

    @staticmethod
    def with_critical_point(n, d, gamma, lam, v, rng):
        """Build an instance plus an exact critical triple (x*, B*, Lam*).

        B* is a random sign matrix, Lam* = v * sign(B*) with 0 < v < lam,
        codes sit at B* + (n/gamma) * v * sign(B*), and the linear loss
        cancels the penalty gradient at x*.
        """
        if not (0 < v < lam):
            raise ConfigError("need 0 < v < lam for an interior dual")
        reg = WRegularizer(lam)
        B = np.where(rng.uniform(size=(n, d)) < 0.5, -1.0, 1.0)
        Lam = v * np.sign(B)
        U = B + (n / gamma) * Lam
        c = -(gamma * (U - B)).reshape(-1)  # grad of penalty block at x*
        prob = LinearDecoupledProblem(n, d, gamma, reg, c=c)
        return prob, U.reshape(-1), B, Lam
