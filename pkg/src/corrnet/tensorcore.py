"""Dense float64 kernels shared by the model, fusion and training code.

Every function is pure and broadcasts over leading batch axes where that is
meaningful, so ``outer`` on ``(N, n)`` and ``(N, m)`` inputs returns
``(N, n, m)``.
"""

import numpy as np

from .errors import DimensionError, DomainError

DEFAULT_EPS = 1e-8
PROB_FLOOR = 1e-12


def as_vector(x, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty vector, got shape {arr.shape}")
    return arr


def outer(u, v):
    """Outer product ``u v^T``, batched over leading axes."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim == 0 or v.ndim == 0 or u.shape[-1] == 0 or v.shape[-1] == 0:
        raise DimensionError(f"outer needs non-empty vectors, got {u.shape} and {v.shape}")
    if u.shape[:-1] != v.shape[:-1]:
        raise DimensionError(f"batch shapes differ: {u.shape} vs {v.shape}")
    return u[..., :, None] * v[..., None, :]


def row_l2_normalize(C, eps=DEFAULT_EPS):
    """Divide each row of ``C`` by ``||row||_2 + eps``.

    Rows whose denominator is exactly zero (only possible with ``eps=0``)
    come back as zeros instead of NaN.
    """
    if eps < 0:
        raise DomainError(f"eps must be >= 0, got {eps}")
    C = np.asarray(C, dtype=np.float64)
    if C.ndim < 2:
        raise DimensionError(f"expected a matrix, got shape {C.shape}")
    denom = np.sqrt(np.sum(C * C, axis=-1, keepdims=True)) + eps
    out = np.zeros_like(C)
    np.divide(C, denom, out=out, where=np.broadcast_to(denom > 0, C.shape))
    return out


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"softmax needs a non-empty vector, got shape {x.shape}")
    e = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def shannon_entropy(p, tol=1e-9):
    """Entropy in bits of a probability vector, with ``0 log 0 = 0``."""
    p = as_vector(p, "p")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise DomainError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
    nz = p[p > 0]
    h = -np.sum(nz * np.log2(nz))
    # a one-hot gives -0.0; near-one-hot rounding can go slightly negative
    return float(h) if h > 0 else 0.0


def cross_entropy(probs, target_index):
    probs = as_vector(probs, "probs")
    if not isinstance(target_index, (int, np.integer)) or not 0 <= target_index < probs.shape[0]:
        raise IndexError(f"class id {target_index!r} outside [0, {probs.shape[0]})")
    return float(-np.log(max(probs[target_index], PROB_FLOOR)))


def affine(W, b, x):
    """``W x + b`` for a single ``x`` of shape ``(i,)`` or a batch ``(N, i)``."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"affine shape mismatch: W{W.shape}, b{b.shape}, x{x.shape}"
        )
    return x @ W.T + b


def relu(x):
    return np.maximum(x, 0.0)
