"""Small dense hashing network and the pairwise similarity loss.

The network maps features through ELU hidden layers into a tanh output, so
continuous codes always lie in (-1, 1)^d.  Parameters travel as one flat
float64 vector; forward and backward operate on whole batches with a fixed
reduction order so results are bit-reproducible.
"""

import io
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError
from .numerics import as_matrix


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths input -> hidden... -> code bits; ELU hidden, tanh output."""

    widths: tuple

    def __post_init__(self):
        w = tuple(int(v) for v in self.widths)
        object.__setattr__(self, "widths", w)
        if len(w) < 2:
            raise ConfigError("network needs at least input and output widths")
        if any(v < 1 for v in w):
            raise ConfigError(f"layer widths must be positive, got {w}")

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    @property
    def n_params(self):
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def layer_slices(self):
        """(W_slice, b_slice, shape) per layer, into the flat parameter vector."""
        out = []
        pos = 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            w_sl = slice(pos, pos + a * b)
            pos += a * b
            b_sl = slice(pos, pos + b)
            pos += b
            out.append((w_sl, b_sl, (b, a)))
        return out


def init_params(spec, rng):
    """Kaiming fan-in normal weights, zero biases; deterministic given rng."""
    x = np.zeros(spec.n_params)
    for w_sl, _, (out_w, in_w) in spec.layer_slices():
        std = np.sqrt(2.0 / in_w)
        x[w_sl] = rng.normal(0.0, std, size=out_w * in_w)
    return x


def _elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_prime(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def _unpack(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.n_params,):
        raise DimensionError(
            f"parameter vector has length {x.shape}, expected ({spec.n_params},)"
        )
    return [
        (x[w_sl].reshape(shape), x[b_sl]) for w_sl, b_sl, shape in spec.layer_slices()
    ]


def forward(spec, x, A):
    """Continuous codes U = tanh(C(x; A)) for a batch of feature rows."""
    U, _ = forward_cached(spec, x, A)
    return U


def forward_cached(spec, x, A):
    """Forward pass keeping pre-activations for the backward pass."""
    A = as_matrix(A)
    if A.shape[1] != spec.in_dim:
        raise DimensionError(
            f"feature dim {A.shape[1]} does not match network input {spec.in_dim}"
        )
    layers = _unpack(spec, x)
    h = A
    hs = [h]
    zs = []
    for i, (W, b) in enumerate(layers):
        z = h @ W.T + b
        zs.append(z)
        h = np.tanh(z) if i == len(layers) - 1 else _elu(z)
        hs.append(h)
    return h, (hs, zs)


def backward(spec, x, A, V, cache=None):
    """Vector-Jacobian product: gradient of sum_i <V_i, D(x; a_i)> in x.

    V holds one cotangent row per batch row; rows of zeros contribute
    nothing, so sparse per-sample attributions can reuse one full pass.
    """
    if cache is None:
        _, cache = forward_cached(spec, x, A)
    hs, zs = cache
    V = as_matrix(V)
    if V.shape != (hs[0].shape[0], spec.out_dim):
        raise DimensionError(f"cotangent shape {V.shape} does not match batch")
    layers = _unpack(spec, x)
    grad = np.zeros(spec.n_params)
    slices = spec.layer_slices()
    u = hs[-1]
    dz = V * (1.0 - u * u)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        w_sl, b_sl, shape = slices[i]
        grad[w_sl] = (dz.T @ hs[i]).reshape(-1)
        grad[b_sl] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ W
            dz = dh * _elu_prime(zs[i - 1])
    return grad


@dataclass(frozen=True)
class PairwiseLossSpec:
    """Similarity pairs (i, j, s) with s in {0,1}, and the sigmoid sharpness."""

    pairs_i: np.ndarray
    pairs_j: np.ndarray
    pairs_s: np.ndarray
    alpha: float = 0.5

    def __post_init__(self):
        i = np.asarray(self.pairs_i, dtype=np.int64)
        j = np.asarray(self.pairs_j, dtype=np.int64)
        s = np.asarray(self.pairs_s, dtype=np.float64)
        if not (i.shape == j.shape == s.shape) or i.ndim != 1 or i.size == 0:
            raise ConfigError("pair arrays must be equal-length non-empty vectors")
        if np.any(i == j):
            raise ConfigError("pairs must join distinct samples")
        if not np.all((s == 0.0) | (s == 1.0)):
            raise ConfigError("pair similarity labels must be 0 or 1")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"loss sharpness must lie in (0, 1], got {self.alpha}")
        object.__setattr__(self, "pairs_i", i)
        object.__setattr__(self, "pairs_j", j)
        object.__setattr__(self, "pairs_s", s)

    @property
    def n_pairs(self):
        return self.pairs_i.size


def pair_inner(loss_spec, U):
    """Continuous Hamming-similarity surrogate s_h = <u_i, u_j> / 2 per pair."""
    U = as_matrix(U)
    return 0.5 * np.sum(U[loss_spec.pairs_i] * U[loss_spec.pairs_j], axis=1)


def pair_loss_terms(loss_spec, U):
    """Per-pair negative log-likelihood terms and their d/ds_h derivatives.

    Bernoulli model with sigma(s) = 1/(1 + exp(-alpha*s)):
    term = log(1 + exp(alpha*s_h)) - alpha*s*s_h, slope alpha*(sigma(s_h) - s).
    """
    a = loss_spec.alpha
    s_h = pair_inner(loss_spec, U)
    terms = np.logaddexp(0.0, a * s_h) - a * loss_spec.pairs_s * s_h
    z = a * s_h
    ez = np.exp(-np.abs(z))  # stable sigmoid
    sig = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    slopes = a * (sig - loss_spec.pairs_s)
    return terms, slopes


def pairwise_loss(loss_spec, U):
    """Mean pairwise cross-entropy over the pair set, plus its gradient in U."""
    U = as_matrix(U)
    terms, slopes = pair_loss_terms(loss_spec, U)
    m = loss_spec.n_pairs
    value = float(np.sum(terms) / m)
    G = np.zeros_like(U)
    w = slopes / m
    np.add.at(G, loss_spec.pairs_i, 0.5 * w[:, None] * U[loss_spec.pairs_j])
    np.add.at(G, loss_spec.pairs_j, 0.5 * w[:, None] * U[loss_spec.pairs_i])
    return value, G


def binarize(u):
    """Elementwise sign with sign(0) = +1 (signed zeros normalize to +1)."""
    u = np.asarray(u, dtype=np.float64)
    return np.where(u >= 0.0, 1.0, -1.0)


def save_params(path, spec, x):
    """Write parameters as CSV: a width-header line then one value per line."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.n_params,):
        raise DimensionError("parameter vector does not match the layer spec")
    with open(path, "w") as f:
        f.write("# widths: " + ",".join(str(w) for w in spec.widths) + "\n")
        for v in x:
            f.write(np.format_float_scientific(v, precision=17) + "\n")


def load_params(path):
    """Inverse of save_params; returns (MlpSpec, flat parameter vector)."""
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("# widths:"):
            raise ConfigError(f"{path} lacks a layer-shape header")
        widths = tuple(int(t) for t in header.split(":", 1)[1].split(","))
        body = f.read()
    spec = MlpSpec(widths)
    x = np.loadtxt(io.StringIO(body), dtype=np.float64, ndmin=1)
    if x.shape != (spec.n_params,):
        raise ConfigError(
            f"{path} holds {x.shape[0]} values, header implies {spec.n_params}"
        )
    return spec, x
