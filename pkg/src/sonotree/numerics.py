"""Deterministic dense linear algebra and small differentiable primitives.

Everything here is a pure function of its inputs: no global state, no
platform-dependent randomness. The random number generator is a splitmix64
stream so that a seed reproduces the same values everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MASK64 = (1 << 64) - 1

PROB_FLOOR = 1e-12  # floor inside log() so saturated predictions stay finite


class ContractViolation(ValueError):
    """An operation was called with inputs that break its preconditions."""


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def check_vector(x, dim=None, name="vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of a fixed length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolation(f"{name}: expected 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ContractViolation(f"{name}: expected dim {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name}: contains non-finite entries")
    return arr


def check_matrix(w, rows=None, cols=None, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array with optional fixed shape."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractViolation(f"{name}: expected 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ContractViolation(f"{name}: expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ContractViolation(f"{name}: expected {cols} cols, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name}: contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# random numbers
# ---------------------------------------------------------------------------

_SM_GOLDEN = 0x9E3779B97F4A7C15
_SM_MIX1 = 0xBF58476D1CE4E5B9
_SM_MIX2 = 0x94D049BB133111EB


class Rng:
    """splitmix64 generator: same seed, same stream, on every platform.

    The stream is stateless per step (output i mixes seed + (i+1)*golden), so
    bulk draws are vectorized in uint64 numpy arithmetic and agree exactly
    with repeated scalar calls.
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._counter = 0
        self._spare = None  # second Box-Muller normal, kept for the next call

    def _bulk_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(_SM_GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM_MIX2)
            return z ^ (z >> np.uint64(31))

    def next_u64(self) -> int:
        return int(self._bulk_u64(1)[0])

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniforms(self, n: int) -> np.ndarray:
        return (self._bulk_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def randint(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is irrelevant for n << 2^64."""
        if n <= 0:
            raise ContractViolation("randint: n must be positive")
        return self.next_u64() % n

    def randints(self, count: int, n: int) -> np.ndarray:
        """Vectorized randint; same stream as `count` scalar calls."""
        if n <= 0:
            raise ContractViolation("randints: n must be positive")
        return (self._bulk_u64(count) % np.uint64(n)).astype(np.int64)

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def normals(self, shape) -> np.ndarray:
        """Box-Muller pairs; the unused half of the last pair is cached."""
        size = int(np.prod(shape))
        out = np.empty(size, dtype=np.float64)
        pos = 0
        if self._spare is not None and size > 0:
            out[0], self._spare, pos = self._spare, None, 1
        remaining = size - pos
        if remaining > 0:
            pairs = (remaining + 1) // 2
            u = self.uniforms(2 * pairs)
            radius = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
            theta = 2.0 * np.pi * u[1::2]
            cos_part, sin_part = radius * np.cos(theta), radius * np.sin(theta)
            interleaved = np.empty(2 * pairs, dtype=np.float64)
            interleaved[0::2], interleaved[1::2] = cos_part, sin_part
            out[pos:] = interleaved[:remaining]
            if remaining % 2 == 1:
                self._spare = float(interleaved[remaining])
        return out.reshape(shape)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, key: int) -> "Rng":
        """Child stream; distinct keys give independent streams."""
        mix = Rng((self.seed ^ ((key + 1) * _SM_GOLDEN)) & MASK64)
        return Rng(mix.next_u64())


# ---------------------------------------------------------------------------
# differentiable primitives
# ---------------------------------------------------------------------------

def affine(x, w, b) -> np.ndarray:
    """w @ x + b with shape checking."""
    x = check_vector(x, name="x")
    w = check_matrix(w, cols=x.shape[0], name="w")
    b = check_vector(b, dim=w.shape[0], name="b")
    return w @ x + b


def softmax(x) -> np.ndarray:
    """Numerically stable softmax (max-shifted)."""
    x = check_vector(x, name="softmax input")
    if x.shape[0] == 0:
        raise ContractViolation("softmax: empty input")
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for batched 2-D input."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through softmax: given y = softmax(s) and dL/dy, return dL/ds."""
    return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))


def cross_entropy(y_true, y_hat) -> float:
    """-sum(y * log(max(y_hat, floor))). y_hat must lie on the simplex."""
    y_true = check_vector(y_true, name="y_true")
    y_hat = check_vector(y_hat, dim=y_true.shape[0], name="y_hat")
    if abs(float(y_hat.sum()) - 1.0) > 1e-6 or np.any(y_hat < -1e-9):
        raise ContractViolation("cross_entropy: y_hat not on the probability simplex")
    return float(-np.sum(y_true * np.log(np.maximum(y_hat, PROB_FLOOR))))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates keyed like the parameter dict."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One Adam update. Returns (new_params, new_state); inputs are untouched."""
    if set(params) != set(grads):
        raise ContractViolation("adam_step: params and grads key sets differ")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ContractViolation(f"adam_step: shape mismatch for {key}")
        m = ADAM_BETA1 * state.m[key] + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[key] + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        new_params[key] = p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[key], new_v[key] = m, v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

@dataclass
class FiniteDiffReport:
    max_rel_err: float
    worst: tuple  # (param name, flat index)
    failures: list  # (param name, flat index, reason) for non-finite evaluations

    @property
    def ok(self) -> bool:
        return not self.failures and np.isfinite(self.max_rel_err)


def finite_difference_check(f, params: dict, analytic: dict, h: float = 1e-5,
                            skip: tuple = ()) -> FiniteDiffReport:
    """Central differences vs analytic gradients, coordinate by coordinate.

    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    ``skip`` names parameters excluded from the sweep.
    """
    if h <= 0:
        raise ContractViolation("finite_difference_check: h must be positive")
    max_err, worst, failures = 0.0, ("", -1), []
    for name, p in params.items():
        if name in skip:
            continue
        flat = p.ravel()
        a_flat = np.asarray(analytic[name], dtype=np.float64).ravel()
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = f(params)
            flat[idx] = orig - h
            f_minus = f(params)
            flat[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                failures.append((name, idx, "non-finite function value"))
                continue
            numeric = (f_plus - f_minus) / (2 * h)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-8)
            err = abs(a_flat[idx] - numeric) / denom
            if err > max_err:
                max_err, worst = err, (name, idx)
    return FiniteDiffReport(max_rel_err=max_err, worst=worst, failures=failures)


# ---------------------------------------------------------------------------
# scaling and projection
# ---------------------------------------------------------------------------

class MinMaxScaler:
    """Per-feature (x - min) / (max - min). Constant features map to 0."""

    def __init__(self):
        self.min_ = None
        self.max_ = None

    def fit(self, samples) -> "MinMaxScaler":
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ContractViolation("MinMaxScaler.fit: need a non-empty 2-D sample array")
        self.min_ = x.min(axis=0)
        self.max_ = x.max(axis=0)
        return self

    def transform(self, x) -> np.ndarray:
        if self.min_ is None:
            raise ContractViolation("MinMaxScaler: transform before fit")
        x = np.asarray(x, dtype=np.float64)
        span = self.max_ - self.min_
        out = np.zeros_like(x, dtype=np.float64)
        nz = span != 0
        # no clipping: out-of-range values keep their ordering
        out[..., nz] = (x[..., nz] - self.min_[nz]) / span[nz]
        return out

    def fit_transform(self, samples) -> np.ndarray:
        return self.fit(samples).transform(samples)


@lru_cache(maxsize=64)
def random_projection(in_dim: int, out_dim: int, seed: int) -> np.ndarray:
    """Fixed Gaussian projection matrix (out_dim x in_dim), scaled 1/sqrt(out_dim)."""
    rng = Rng((seed ^ (in_dim * 0x100000001B3) ^ out_dim) & MASK64)
    mat = rng.normals((out_dim, in_dim)) / np.sqrt(out_dim)
    mat.setflags(write=False)
    return mat


def l2_normalize(x: np.ndarray, axis=None) -> np.ndarray:
    """Scale to unit L2 norm; zero vectors stay zero."""
    norm = np.linalg.norm(x, axis=axis, keepdims=axis is not None)
    return x / np.maximum(norm, 1e-300)


# ---------------------------------------------------------------------------
# principal components by power iteration
# ---------------------------------------------------------------------------

PCA_ITERS = 100
PCA_TOL = 1e-9
_PCA_INIT_SEED = 0x5EED


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic sign: the largest-magnitude coordinate is positive."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def top_singular_direction(centered: np.ndarray, iters: int = PCA_ITERS,
                           tol: float = PCA_TOL, seed: int = _PCA_INIT_SEED,
                           orthogonal_to: np.ndarray | None = None):
    """Leading right singular direction of a centered matrix via power iteration.

    Returns (direction, singular_value). ``orthogonal_to`` holds previously
    found components (k x dim) that each iterate is re-orthogonalized against.
    """
    n, dim = centered.shape
    rng = Rng(seed)
    v = rng.normals(dim)
    if orthogonal_to is not None and len(orthogonal_to):
        v = v - orthogonal_to.T @ (orthogonal_to @ v)
    norm = np.linalg.norm(v)
    if norm == 0:
        v = np.zeros(dim)
        v[0] = 1.0
    else:
        v = v / norm
    for _ in range(iters):
        w = centered.T @ (centered @ v)
        if orthogonal_to is not None and len(orthogonal_to):
            w = w - orthogonal_to.T @ (orthogonal_to @ w)
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            # data has no variance left in this subspace
            return _fix_sign(v), 0.0
        w = w / norm
        if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
            v = w
            break
        v = w
    v = _fix_sign(v)
    sigma = float(np.linalg.norm(centered @ v))
    return v, sigma


@dataclass
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray  # k x input-dim, rows orthonormal
    k: int

    def project(self, x) -> np.ndarray:
        x = check_vector(x, dim=self.mean.shape[0], name="pca input")
        return self.components @ (x - self.mean)


def fit_pca(x, k: int, seed: int = _PCA_INIT_SEED) -> PcaProjection:
    """Top-k principal directions of mean-centered rows, power iteration + deflation."""
    x = check_matrix(x, name="pca data")
    n, dim = x.shape
    if k < 1 or k > min(n, dim):
        raise ContractViolation(f"fit_pca: k={k} out of range for {n}x{dim} data")
    mean = x.mean(axis=0)
    centered = x - mean
    comps = np.zeros((0, dim))
    for j in range(k):
        v, _sigma = top_singular_direction(
            centered, seed=seed + j, orthogonal_to=comps if len(comps) else None)
        comps = np.vstack([comps, v])
        centered = centered - np.outer(centered @ v, v)
    return PcaProjection(mean=mean, components=comps, k=k)
