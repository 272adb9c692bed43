"""A tour of the W-shaped binarization penalty and its dual machinery.

The penalty h(z) = lam * ||z| - 1| pulls each coordinate toward +-1 but has
no usable prox once composed with a network.  Its Fenchel conjugate h* is
|v| restricted to [-lam, lam], and THAT prox is a five-branch closed form.
This script walks the branch structure and cross-checks everything against
the brute-force oracle.
"""

import numpy as np

from dualhash import (
    WRegularizer,
    h_conj_value,
    h_value,
    prox_conj,
    prox_h,
    prox_oracle,
    subdiff_conj,
)

lam, tau = 0.05, 0.01
reg = WRegularizer(lam)

print("penalty values h(z) = lam * sum ||z_i| - 1|")
for z in ([1.0, -1.0], [0.0], [2.0, -2.0]):
    print(f"  h({z}) = {h_value(reg, np.array(z)):.4f}")

print("\nconjugate values: |v| inside [-lam, lam], +inf outside")
for v in (0.0, 0.05, 0.06):
    print(f"  h*([{v}]) = {h_conj_value(reg, np.array([v]))}")

print("\nprox of tau*h*: the five branches at lam=0.05, tau=0.01")
ys = np.array([0.07, 0.03, 0.005, -0.03, -0.07])
out = prox_conj(reg, ys, tau)
for y, v in zip(ys, out):
    print(f"  y={y:+.3f} -> {v:+.3f}")

print("\nevery output stays inside [-lam, lam]; cross-check vs brute force:")
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(200):
    y = float(rng.uniform(-2, 2))
    t = float(rng.uniform(1e-3, 1.0))
    ref = prox_oracle(lambda v: np.where(np.abs(v) <= lam, np.abs(v), np.inf), y, t)
    worst = max(worst, abs(prox_conj(reg, np.array([y]), t)[0] - ref))
print(f"  max |closed form - oracle| over 200 random points: {worst:.2e}")

print("\nthe primal prox (soft shrink toward the kink at |v| = 1):")
for y in (1.2, 1.0, 0.4, 0.0, -1.2):
    print(f"  prox_h({y:+.2f}) = {prox_h(reg, np.array([y]), tau)[0]:+.4f}")

print("\nconjugate subdifferential intervals (used by the stationarity measure):")
for v in (0.0, 0.02, lam, -lam):
    print(f"  d h*({v:+.3f}) = {subdiff_conj(reg, v)}")
