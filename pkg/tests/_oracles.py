"""Independent reference computations used by several test files.

Nothing here calls the package's own backward pass, fusion rules or metrics;
the point is to check those against something written separately.
"""

import dataclasses
import itertools
import math

import numpy as np

from corrnet.model import PARAM_FIELDS, forward


def ce_loss(logits, y):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    return float(np.log(np.exp(z).sum()) - z[y])


def loss_of(params, u, v, y, eps):
    return ce_loss(forward(params, u, v, eps)[0], y)


def central_diff(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` at every entry of array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def numeric_gradients(params, u, v, y, eps, h=1e-5):
    """Finite-difference gradients of the CE loss for every tensor and for u, v."""
    out = {}
    for name in PARAM_FIELDS:
        def f(t, name=name):
            return loss_of(dataclasses.replace(params, **{name: t}), u, v, y, eps)
        out[name] = central_diff(f, getattr(params, name), h)
    out["du"] = central_diff(lambda t: loss_of(params, t, v, y, eps), u, h)
    out["dv"] = central_diff(lambda t: loss_of(params, u, t, y, eps), v, h)
    return out


def worst_violation(analytic, numeric, rel=1e-4, abs_floor=1e-7):
    """Largest ``err / allowed`` over all entries; <= 1 means every entry passes."""
    worst = 0.0
    for name, num in numeric.items():
        a = np.asarray(analytic[name])
        diff = np.abs(a - num)
        allowed = np.maximum(abs_floor, rel * np.maximum(np.abs(a), np.abs(num)))
        worst = max(worst, float((diff / allowed).max()))
    return worst


def reference_baseline(u, v, strategy):
    ops = {
        "sum": lambda a, b: a + b,
        "avg": lambda a, b: (a + b) / 2.0,
        "max": lambda a, b: a if a >= b else b,
        "multiply": lambda a, b: a * b,
    }
    return np.array([ops[strategy](a, b) for a, b in zip(u.tolist(), v.tolist())])


def reference_entropy_bits(p):
    return -sum(x * math.log2(x) for x in p if x > 0)


def reference_softmax(x):
    m = max(x)
    e = [math.exp(t - m) for t in x]
    s = sum(e)
    return [t / s for t in e]


def gated_accuracy(Z, U, V, labels, th):
    """Accuracy of the entropy gate at ``th``, spelled out clip by clip."""
    hits = 0
    for z, u, v, y in zip(Z, U, V, labels):
        g = u + v
        e = reference_entropy_bits(reference_softmax(list(z + g)))
        fused = z + g if e < th else g
        hits += int(np.argmax(fused) == y)
    return hits / len(labels)


def correlation_only_template_table(class_count, margin=4.0):
    """All noise-free ``(label, u, v)`` templates of the correlation-only construction."""
    rows = []
    for y, s in itertools.product(range(class_count), (1.0, -1.0)):
        k = 2 * (y // 2)
        s2 = s if y % 2 == 0 else -s
        u = np.zeros(class_count)
        v = np.zeros(class_count)
        u[k], u[k + 1] = s * margin, margin
        v[k], v[k + 1] = margin, s2 * margin
        rows.append((y, u, v))
    return rows


def bayes_accuracy(observations, labels):
    """Accuracy of the best possible predictor that sees only ``observations``.

    Templates are equally likely; each distinct observation is assigned its
    most frequent label.
    """
    groups = {}
    for obs, y in zip(observations, labels):
        key = tuple(np.round(obs, 12))
        groups.setdefault(key, []).append(y)
    best = sum(max(ys.count(c) for c in set(ys)) for ys in groups.values())
    return best / len(labels)
