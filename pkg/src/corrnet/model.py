"""Correlation head: outer-product map of two score vectors fed to a 3-layer MLP.

The input to the MLP is the row-normalised outer product of the spatial
scores ``u`` (length n) and the temporal scores ``v`` (length m), flattened
row-major. Layers are fc1 (n*m -> hidden), fc2 (hidden -> hidden) and
fc3 (hidden -> B) with ReLU after the first two.

``forward``/``backward`` accept either single vectors or batches with a
leading axis; gradients of a batch are summed over that axis.
"""

import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .errors import ConfigError, DimensionError, FormatError, MalformedFileError

MAGIC = b"CORRNET1"
_HEADER = struct.Struct("<8s4I")
PARAM_FIELDS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True, eq=False)
class CorrnetParams:
    n: int
    m: int
    hidden: int
    B: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        for name, shape in param_shapes(self.n, self.m, self.hidden, self.B).items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} has non-finite entries")
            if arr.flags.writeable:
                arr = arr.copy()
                arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def tensors(self):
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def equals(self, other):
        """Bitwise equality of shapes and every tensor."""
        if (self.n, self.m, self.hidden, self.B) != (other.n, other.m, other.hidden, other.B):
            return False
        return all(
            getattr(self, k).tobytes() == getattr(other, k).tobytes() for k in PARAM_FIELDS
        )


def param_shapes(n, m, hidden, B):
    return {
        "W1": (hidden, n * m),
        "b1": (hidden,),
        "W2": (hidden, hidden),
        "b2": (hidden,),
        "W3": (B, hidden),
        "b3": (B,),
    }


@dataclass(frozen=True)
class ForwardCache:
    u: np.ndarray
    v: np.ndarray
    eps: float
    normalize: bool
    x: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    logits: np.ndarray


@dataclass(frozen=True)
class CorrnetGradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    du: np.ndarray
    dv: np.ndarray

    def tensors(self):
        return {name: getattr(self, name) for name in PARAM_FIELDS}


def init_params(n, m, hidden, B, seed):
    """Glorot-uniform weights, zero biases, drawn from ``default_rng(seed)``."""
    for name, val in (("n", n), ("m", m), ("hidden", hidden), ("B", B)):
        if not isinstance(val, (int, np.integer)) or val < 1:
            raise ConfigError(f"{name} must be a positive integer, got {val!r}")
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return CorrnetParams(
        n=int(n), m=int(m), hidden=int(hidden), B=int(B),
        W1=glorot(hidden, n * m), b1=np.zeros(hidden),
        W2=glorot(hidden, hidden), b2=np.zeros(hidden),
        W3=glorot(B, hidden), b3=np.zeros(B),
    )


def build_correlation_input(u, v, eps=tc.DEFAULT_EPS, normalize=True):
    """Row-major flattening of the row-normalised outer product of ``u`` and ``v``.

    ``normalize=False`` skips the row normalisation and feeds the raw outer
    product, which keeps the magnitude of ``u`` that normalisation discards.
    """
    C = tc.outer(u, v)
    if normalize:
        C = tc.row_l2_normalize(C, eps)
    return C.reshape(C.shape[:-2] + (-1,))


def head_forward(params, x):
    """Run the three dense layers on an already-built correlation input."""
    a1 = tc.affine(params.W1, params.b1, x)
    h1 = tc.relu(a1)
    a2 = tc.affine(params.W2, params.b2, h1)
    h2 = tc.relu(a2)
    logits = tc.affine(params.W3, params.b3, h2)
    return logits, (a1, h1, a2, h2)


def _check_inputs(params, u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim not in (1, 2) or u.shape[-1] != params.n:
        raise DimensionError(f"u has shape {u.shape}, params expect n={params.n}")
    if v.ndim != u.ndim or v.shape[-1] != params.m or v.shape[:-1] != u.shape[:-1]:
        raise DimensionError(f"v has shape {v.shape}, params expect m={params.m} matching u{u.shape}")
    return u, v


def forward(params, u, v, eps=tc.DEFAULT_EPS, normalize=True):
    """Logits for one ``(u, v)`` pair or a batch of pairs, plus the backprop cache."""
    u, v = _check_inputs(params, u, v)
    x = build_correlation_input(u, v, eps, normalize)
    logits, (a1, h1, a2, h2) = head_forward(params, x)
    cache = ForwardCache(
        u=u, v=v, eps=float(eps), normalize=bool(normalize),
        x=x, a1=a1, h1=h1, a2=a2, h2=h2, logits=logits,
    )
    return logits, cache


def predict_logits(params, u, v, eps=tc.DEFAULT_EPS, normalize=True):
    return forward(params, u, v, eps, normalize)[0]


def _input_grads(u, v, eps, gx):
    """Chain ``d/dx`` back through the row normalisation and outer product.

    The outer-product structure makes the row norm factor as
    ``r_i = |u_i| * ||v||``, so with ``D_i = r_i + eps`` the map is
    ``x_ij = u_i v_j / D_i`` and

        dx_ij/du_i = v_j * eps / D_i**2
        dx_ij/dv_k = u_i delta_jk / D_i - u_i v_j |u_i| v_k / (||v|| D_i**2)

    Rows with ``D_i == 0`` were zeroed in the forward pass and get no gradient.
    """
    n, m = u.shape[-1], v.shape[-1]
    G = gx.reshape(gx.shape[:-1] + (n, m))
    s = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    a = np.abs(u)
    D = a * s + eps
    live = D > 0
    invD = np.divide(1.0, D, out=np.zeros_like(D), where=live)
    Gv = np.einsum("...ij,...j->...i", G, v)
    du = Gv * eps * invD * invD
    dv = np.einsum("...ij,...i->...j", G, u * invD)
    inv_s = np.divide(1.0, s, out=np.zeros_like(s), where=s > 0)
    coef = np.sum(Gv * u * a * invD * invD, axis=-1, keepdims=True)
    dv = dv - coef * v * inv_s
    return du, dv


def backward(params, cache, dlogits):
    """Gradients of ``sum(logits * dlogits)`` w.r.t. every parameter and u, v."""
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if cache.logits.shape != dlogits.shape or cache.logits.shape[-1] != params.B:
        raise DimensionError(f"dlogits {dlogits.shape} does not match cached logits {cache.logits.shape}")
    if cache.x.shape[-1] != params.n * params.m or cache.a1.shape[-1] != params.hidden:
        raise DimensionError("cache was produced by parameters of a different shape")

    batched = dlogits.ndim == 2
    def _outer_sum(g, h):
        return g.T @ h if batched else np.outer(g, h)
    def _bias_sum(g):
        return g.sum(axis=0) if batched else g

    dW3 = _outer_sum(dlogits, cache.h2)
    db3 = _bias_sum(dlogits)
    dh2 = dlogits @ params.W3
    da2 = dh2 * (cache.a2 > 0)
    dW2 = _outer_sum(da2, cache.h1)
    db2 = _bias_sum(da2)
    dh1 = da2 @ params.W2
    da1 = dh1 * (cache.a1 > 0)
    dW1 = _outer_sum(da1, cache.x)
    db1 = _bias_sum(da1)
    dx = da1 @ params.W1
    if cache.normalize:
        du, dv = _input_grads(cache.u, cache.v, cache.eps, dx)
    else:
        G = dx.reshape(dx.shape[:-1] + (params.n, params.m))
        du = np.einsum("...ij,...j->...i", G, cache.v)
        dv = np.einsum("...ij,...i->...j", G, cache.u)
    return CorrnetGradients(W1=dW1, b1=db1, W2=dW2, b2=db2, W3=dW3, b3=db3, du=du, dv=dv)


def save_params(params, path):
    """Little-endian binary: magic, n, m, hidden, B as u32, then f64 tensors."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, params.n, params.m, params.hidden, params.B))
        for name in PARAM_FIELDS:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_params(path):
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC):
        raise MalformedFileError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise MalformedFileError(f"{path}: truncated header ({len(blob)} bytes)")
    _, n, m, hidden, B = _HEADER.unpack_from(blob)
    if min(n, m, hidden, B) < 1:
        raise MalformedFileError(f"{path}: zero dimension in header {(n, m, hidden, B)}")
    shapes = param_shapes(n, m, hidden, B)
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(blob) != expected:
        raise MalformedFileError(
            f"{path}: size {len(blob)} bytes does not match header dims {(n, m, hidden, B)} "
            f"(expected {expected})"
        )
    offset = _HEADER.size
    tensors = {}
    for name in PARAM_FIELDS:
        count = int(np.prod(shapes[name]))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        tensors[name] = arr.astype(np.float64).reshape(shapes[name])
        offset += 8 * count
    try:
        return CorrnetParams(n=n, m=m, hidden=hidden, B=B, **tensors)
    except (ConfigError, DimensionError) as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc


def tile_expand_fc1(params, new_n, new_m):
    """Widen fc1 to accept a ``new_n x new_m`` map by cyclic column copies.

    Column for cell ``(i, j)`` of the larger map is the original column for
    ``(i mod n, j mod m)``. Other layers are shared unchanged.
    """
    if new_n < params.n or new_m < params.m:
        raise ConfigError(
            f"cannot shrink fc1 input from {params.n}x{params.m} to {new_n}x{new_m}"
        )
    rows = np.arange(new_n) % params.n
    cols = np.arange(new_m) % params.m
    src = (rows[:, None] * params.m + cols[None, :]).reshape(-1)
    return dataclasses.replace(params, n=int(new_n), m=int(new_m), W1=params.W1[:, src])
