"""Independent oracles used by the tests.

Everything here deliberately avoids the package's computational paths:
least squares go through numpy's lstsq/pinv, pattern counts through dense
angular sweeps, gradients through central finite differences, and deep
gradients through a direct forward/backward pass.  Expected values in the
tests are produced by these routines (or frozen from them), never by the
code under test.
"""

from __future__ import annotations

import numpy as np


def sweep_patterns_2d(ds, directions: int = 10000) -> set:
    """Distinct strict activation patterns seen on a dense circle sweep."""
    angles = np.linspace(0.0, 2.0 * np.pi, directions, endpoint=False)
    ws = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    signs = ws @ ds.x  # (directions, n)
    patterns = set()
    for row in signs:
        if np.min(np.abs(row)) / np.max(np.abs(row)) < 1e-9:
            continue  # too close to a boundary to trust
        patterns.add(tuple(int(v > 0.0) for v in row))
    return patterns


def lstsq_minnorm(cols: np.ndarray, ys: np.ndarray) -> np.ndarray:
    w, *_ = np.linalg.lstsq(cols.T, ys, rcond=1e-10)
    return w


def lstsq_loss(cols: np.ndarray, ys: np.ndarray) -> float:
    w = lstsq_minnorm(cols, ys)
    r = cols.T @ w - ys
    return 0.5 * float(r @ r)


def relu_loss_direct(ds, w) -> float:
    total = 0.0
    for i in range(ds.n):
        total += 0.5 * (max(float(ds.x[:, i] @ w), 0.0) - float(ds.y[i])) ** 2
    return total


def finite_diff_gradient(ds, w, step: float = 1e-6) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    grad = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = step
        grad[k] = (relu_loss_direct(ds, w + e) - relu_loss_direct(ds, w - e)) / (2 * step)
    return grad


def off_boundary(ds, w, clearance: float = 1e-3) -> bool:
    h = ds.x.T @ np.asarray(w, dtype=float)
    scale = np.linalg.norm(ds.x, axis=0) * max(1.0, float(np.linalg.norm(w)))
    return bool(np.min(np.abs(h) / scale) > clearance)


def deep_forward(weights, x):
    cur = np.asarray(x, dtype=float)
    pres = []
    acts = [cur]
    for m, w in enumerate(weights):
        pre = w @ cur
        pres.append(pre)
        cur = pre if m == len(weights) - 1 else np.maximum(pre, 0.0)
        acts.append(cur)
    return pres, acts


def deep_gradients(weights, x, y):
    """Plain reverse-mode pass over the stack, no label construction."""
    pres, acts = deep_forward(weights, x)
    upstream = acts[-1] - np.asarray(y, dtype=float)
    grads = [None] * len(weights)
    for m in range(len(weights) - 1, -1, -1):
        grads[m] = np.outer(upstream, acts[m])
        if m > 0:
            upstream = weights[m].T @ upstream
            upstream = upstream * (pres[m - 1] > 0.0)
    return grads


def deep_loss(weights, x, y) -> float:
    _, acts = deep_forward(weights, x)
    return 0.5 * float(np.sum((acts[-1] - np.asarray(y, dtype=float)) ** 2))


def fd_layer_gradient(weights, x, y, layer: int, step: float = 1e-6) -> np.ndarray:
    base = [np.array(w, dtype=float) for w in weights]
    grad = np.zeros_like(base[layer])
    it = np.nditer(grad, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        plus = [w.copy() for w in base]
        minus = [w.copy() for w in base]
        plus[layer][idx] += step
        minus[layer][idx] -= step
        grad[idx] = (deep_loss(plus, x, y) - deep_loss(minus, x, y)) / (2 * step)
        it.iternext()
    return grad


def grid_sign_changes(fn, t_hi: float, points: int = 200000) -> int:
    """Dense-grid sign change counter on [0, t_hi] (a lower bound on roots)."""
    ts = np.linspace(0.0, t_hi, points)
    vals = fn(ts)
    signs = np.sign(vals)
    nz = signs[signs != 0]
    return int(np.sum(nz[1:] != nz[:-1]))
