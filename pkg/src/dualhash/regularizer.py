"""W-shaped binarization penalties, their conjugates, and proximal operators.

The main regularizer is h(z) = lambda * || |z| - 1 ||_1, applied entrywise.
Its Fenchel conjugate h*(v) is |v| on [-lambda, lambda] and +inf outside,
which gives the dual update a closed-form five-branch prox.  Two baseline
penalties (a weakly convex square variant and a smooth log-cosh variant) and
a brute-force prox oracle for verification live here as well.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DomainError


@dataclass(frozen=True)
class WRegularizer:
    """Entrywise penalty lam * ||z| - 1| pulling coordinates toward +-1."""

    lam: float

    def __post_init__(self):
        if not (self.lam > 0):
            raise ConfigError(f"regularizer weight must be positive, got {self.lam}")


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; endpoints may be +-inf."""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise ConfigError(f"bad interval [{self.lo}, {self.hi}]")

    def contains(self, v, tol=0.0):
        return self.lo - tol <= v <= self.hi + tol

    def project(self, v):
        return min(max(v, self.lo), self.hi)

    def dist(self, v):
        return abs(v - self.project(v))


def h_value(reg, z):
    """lam * sum_i ||z_i| - 1|."""
    z = np.asarray(z, dtype=np.float64)
    return float(reg.lam * np.sum(np.abs(np.abs(z) - 1.0)))


def h_conj_value(reg, v):
    """Conjugate value: sum |v_i| if all |v_i| <= lam, else +inf."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(np.abs(v) > reg.lam):
        return math.inf
    return float(np.sum(np.abs(v)))


def prox_conj(reg, y, tau):
    """Prox of tau*h* (elementwise, five branches); output lies in [-lam, lam].

    Equivalent to clipping the soft-threshold of y at level tau into the
    conjugate's domain.  A final clip guards the invariant against the one-ulp
    rounding of y - tau at the branch boundary.
    """
    if not (tau > 0):
        raise ConfigError(f"prox parameter must be positive, got {tau}")
    y = np.asarray(y, dtype=np.float64)
    lam = reg.lam
    shrunk = np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)
    return np.clip(shrunk, -lam, lam)


def prox_h(reg, y, tau):
    """Prox of tau*h for the W-penalty, elementwise.

    For s = |y| and t = tau*lam the minimizer is s - t above the kink
    (s > 1 + t), the kink itself for s within t of 1, and s + t below it
    (the slope of ||v|-1| is -lam inside the well).  Sign is restored at the
    end; y = 0 maps to 0 by the documented odd-symmetry convention even
    though the subproblem's two global minimizers sit at +-t.
    """
    if not (tau > 0):
        raise ConfigError(f"prox parameter must be positive, got {tau}")
    y = np.asarray(y, dtype=np.float64)
    t = tau * reg.lam
    s = np.abs(y)
    out = np.where(s > 1.0 + t, s - t, np.where(s >= max(1.0 - t, 0.0), 1.0, s + t))
    out = np.where(s == 0.0, 0.0, np.sign(y) * out)
    return out


def subdiff_conj(reg, v):
    """Subdifferential of h* at a scalar v with |v| <= lam, as an Interval.

    {sign(v)} strictly inside the domain, [-1, 1] at 0, and the half-lines
    [1, +inf) / (-inf, -1] at the +-lam boundary (normal cone of the domain).
    """
    lam = reg.lam
    if abs(v) > lam:
        raise DomainError(f"|{v}| exceeds the conjugate domain bound {lam}")
    if v == 0.0:
        return Interval(-1.0, 1.0)
    if v == lam:
        return Interval(1.0, math.inf)
    if v == -lam:
        return Interval(-math.inf, -1.0)
    s = 1.0 if v > 0 else -1.0
    return Interval(s, s)


def subdiff_conj_bounds(reg, V):
    """Vectorized subdiff_conj: arrays (lo, hi) for every entry of V."""
    V = np.asarray(V, dtype=np.float64)
    lam = reg.lam
    if np.any(np.abs(V) > lam):
        raise DomainError("dual matrix has entries outside [-lam, lam]")
    sgn = np.sign(V)
    lo = np.where(V == 0.0, -1.0, sgn)
    hi = np.where(V == 0.0, 1.0, sgn)
    lo = np.where(V == lam, 1.0, lo)
    hi = np.where(V == lam, math.inf, hi)
    lo = np.where(V == -lam, -math.inf, lo)
    hi = np.where(V == -lam, -1.0, hi)
    return lo, hi


def prox_oracle(fn, y, tau, grid=4001):
    """Brute-force scalar prox: grid argmin of fn(v) + (v-y)^2/(2*tau) on
    [y-3, y+3], refined by one golden-section pass around the best cell.

    Verification-only; fn may return +inf outside its domain.  The grid
    sweep evaluates fn on the whole array when fn supports it.
    """
    if grid < 3:
        raise ConfigError("grid resolution must be at least 3")
    vs = np.linspace(y - 3.0, y + 3.0, grid)

    def obj(v):
        return fn(v) + (v - y) ** 2 / (2.0 * tau)

    try:
        vals = np.asarray(obj(vs), dtype=np.float64)
        if vals.shape != vs.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([obj(v) for v in vs])
    i = int(np.argmin(vals))
    lo = vs[max(i - 1, 0)]
    hi = vs[min(i + 1, grid - 1)]

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(80):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = obj(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class WeaklyConvexRegularizer:
    """Baseline penalty lam * ||z^2 - 1||_1 (weakly convex)."""

    lam: float

    def __post_init__(self):
        if not (self.lam > 0):
            raise ConfigError(f"regularizer weight must be positive, got {self.lam}")


def wc_reg_value(reg, z):
    """lam * sum_i |z_i^2 - 1|."""
    z = np.asarray(z, dtype=np.float64)
    return float(reg.lam * np.sum(np.abs(z * z - 1.0)))


def prox_wc(reg, y, tau):
    """Prox of tau * lam*||v^2-1||_1, elementwise.

    Unique solution requires the subproblem to be strongly convex, i.e.
    2*lam*tau < 1.  Solved by casework on |y|: the quadratic is expanded
    inside the well (divide by 1 - 2*lam*tau), contracted outside
    (divide by 1 + 2*lam*tau), and pinned to the kink |v| = 1 in between.
    """
    if not (tau > 0):
        raise ConfigError(f"prox parameter must be positive, got {tau}")
    c = 2.0 * reg.lam * tau
    if c >= 1.0:
        raise ConfigError(
            f"prox subproblem not strongly convex: 2*lam*tau = {c} >= 1"
        )
    y = np.asarray(y, dtype=np.float64)
    s = np.abs(y)
    inner = s / (1.0 - c)
    outer = s / (1.0 + c)
    mag = np.where(s <= 1.0 - c, inner, np.where(s >= 1.0 + c, outer, 1.0))
    return np.sign(y) * mag


def logcosh_reg(z):
    """Smooth baseline penalty sum_i log(cosh(|z_i| - 1)) and its gradient.

    Gradient: tanh(|z_i| - 1) * sign(z_i), with sign(0) taken as +1.
    """
    z = np.asarray(z, dtype=np.float64)
    a = np.abs(z) - 1.0
    # log(cosh(a)) = |a| + log1p(exp(-2|a|)) - log 2, stable for large |a|
    val = float(np.sum(np.abs(a) + np.log1p(np.exp(-2.0 * np.abs(a))) - math.log(2.0)))
    sgn = np.where(z >= 0.0, 1.0, -1.0)
    grad = np.tanh(a) * sgn
    return val, grad


def w_subgradient(reg, z):
    """A subgradient of h at z: lam * sign(|z|-1) * sign(z), sign(0) = +1."""
    z = np.asarray(z, dtype=np.float64)
    sz = np.where(z >= 0.0, 1.0, -1.0)
    sa = np.where(np.abs(z) >= 1.0, 1.0, -1.0)
    return reg.lam * sa * sz
