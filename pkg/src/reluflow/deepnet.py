"""Layer-wise decomposition of deep rectified networks.

For one data pair, every layer of a deep rectified network can be given a
synthetic label so that its weight gradient equals the gradient of a
stand-alone single-layer problem: the residual of the linear output layer
is pulled backwards through the transposed weights, masked by the strict
activation indicators.  Multi-output single layers further split into
independent per-row problems.  Both decompositions are exact, and the
invariance of adjacent layers' squared-norm differences under training is
checkable here in discrete time up to a first-order step-size band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, detect_assumptions
from .errors import StructuralError


@dataclass(frozen=True)
class DeepNet:
    """Stack of weight matrices; all layers rectified except the last."""

    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = []
        for i, w in enumerate(self.weights):
            w = np.array(w, dtype=float)
            if w.ndim != 2:
                raise StructuralError(f"layer {i + 1} weight must be a matrix")
            if not np.all(np.isfinite(w)):
                raise StructuralError(f"layer {i + 1} has non-finite entries")
            if mats and w.shape[1] != mats[-1].shape[0]:
                raise StructuralError(
                    f"layer {i + 1} expects input size {w.shape[1]} but the previous"
                    f" layer outputs {mats[-1].shape[0]}"
                )
            w.setflags(write=False)
            mats.append(w)
        if not mats:
            raise StructuralError("network needs at least one layer")
        object.__setattr__(self, "weights", tuple(mats))

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def to_json(self) -> dict:
        return {"weights": [w.tolist() for w in self.weights]}

    @classmethod
    def from_json(cls, obj: dict) -> "DeepNet":
        try:
            return cls(weights=tuple(np.asarray(w, dtype=float) for w in obj["weights"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise StructuralError(f"malformed network JSON: {exc}") from exc


def forward_trace(net: DeepNet, x) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-layer (input, output) pairs; the final layer applies no rectifier."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.in_dim,):
        raise StructuralError(f"input must have length {net.in_dim}")
    trace = []
    current = x
    for m, w in enumerate(net.weights):
        pre = w @ current
        out = pre if m == net.depth - 1 else np.maximum(pre, 0.0)
        trace.append((current, out))
        current = out
    return trace


@dataclass(frozen=True)
class LayerProblem:
    """Stand-alone problem for one layer: gradient-equivalent by construction.

    ``layer_index`` is 1-based.  ``backprop_label`` is the synthetic target
    making the layer's own gradient equal the deep network's gradient for
    this weight matrix; the last layer's problem is linear.
    """

    layer_index: int
    input: np.ndarray
    backprop_label: np.ndarray
    delta: np.ndarray
    is_output: bool

    def __post_init__(self):
        for name in ("input", "backprop_label", "delta"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def weight_gradient(self) -> np.ndarray:
        return np.outer(self.delta, self.input)


def backprop_labels(net: DeepNet, x, y) -> list[LayerProblem]:
    """Synthetic per-layer labels whose problems reproduce the deep gradient.

    The output residual is pushed down through transposed weights, masked
    at each step by the strict indicator of the next layer's input, and
    each layer's label is its own output minus the arriving residual.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (net.out_dim,):
        raise StructuralError(f"label must have length {net.out_dim}")
    trace = forward_trace(net, x)
    l = net.depth
    deltas: list[np.ndarray] = [np.empty(0)] * l
    deltas[l - 1] = trace[l - 1][1] - y
    for m in range(l - 2, -1, -1):
        upstream = net.weights[m + 1].T @ deltas[m + 1]
        mask = (trace[m + 1][0] > 0.0).astype(float)
        deltas[m] = mask * upstream
    problems = []
    for m in range(l):
        x_m, o_m = trace[m]
        problems.append(
            LayerProblem(
                layer_index=m + 1,
                input=x_m,
                backprop_label=o_m - deltas[m],
                delta=deltas[m],
                is_output=(m == l - 1),
            )
        )
    return problems


def network_gradients(net: DeepNet, x, y) -> list[np.ndarray]:
    """Exact per-layer gradients of the half squared output error."""
    return [p.weight_gradient() for p in backprop_labels(net, x, y)]


@dataclass(frozen=True)
class MultiOutputDataset:
    """Shared inputs with vector labels: one row per output coordinate."""

    x: np.ndarray  # (d, n)
    y: np.ndarray  # (d_out, n)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
            raise StructuralError("inputs and labels must share the sample axis")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def out_dim(self) -> int:
        return self.y.shape[0]


def row_decompose(w_matrix, ds_multi: MultiOutputDataset) -> list[tuple[np.ndarray, Dataset]]:
    """Independent single-output problems, one per row of the weight matrix.

    Returns ``(weight_row, dataset)`` pairs: summing the row losses gives
    the multi-output loss and stacking the row gradients gives the full
    gradient.  Assumption flags are re-detected per row; rows violating
    them (for instance zero labels) are flagged by omission, never
    rejected.
    """
    w_matrix = np.asarray(w_matrix, dtype=float)
    if w_matrix.shape != (ds_multi.out_dim, ds_multi.x.shape[0]):
        raise StructuralError(
            f"weight matrix must be {ds_multi.out_dim} x {ds_multi.x.shape[0]}"
        )
    out = []
    for j in range(ds_multi.out_dim):
        yj = ds_multi.y[j]
        ds = Dataset(x=ds_multi.x, y=yj, assumptions=detect_assumptions(ds_multi.x, yj))
        out.append((w_matrix[j], ds))
    return out


def multi_loss(w_matrix, ds_multi: MultiOutputDataset) -> float:
    w_matrix = np.asarray(w_matrix, dtype=float)
    r = np.maximum(w_matrix @ ds_multi.x, 0.0) - ds_multi.y
    return 0.5 * float(np.sum(r * r))


def multi_gradient(w_matrix, ds_multi: MultiOutputDataset) -> np.ndarray:
    w_matrix = np.asarray(w_matrix, dtype=float)
    pre = w_matrix @ ds_multi.x
    r = (pre > 0.0) * (np.maximum(pre, 0.0) - ds_multi.y)
    return r @ ds_multi.x.T


@dataclass(frozen=True)
class BalancednessResult:
    """Per-iteration drift of adjacent layers' squared-norm differences."""

    drift: np.ndarray  # (iters, depth - 1)
    losses: np.ndarray  # (iters + 1,)
    diverged: bool

    def __post_init__(self):
        for name in ("drift", "losses"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def max_drift(self) -> float:
        return float(np.max(self.drift)) if self.drift.size else 0.0


def balancedness_drift(
    net: DeepNet, x, y, step: float, iters: int
) -> BalancednessResult:
    """Track the conserved pair differences under small-step descent.

    The continuous flow keeps ``|W_m|_F^2 - |W_{m+1}|_F^2`` exactly
    constant; discrete steps drift by O(step), so halving the step over a
    fixed simulated time should roughly halve the recorded drift.
    """
    if step <= 0.0:
        raise StructuralError("step must be positive")
    weights = [w.copy() for w in net.weights]
    l = len(weights)

    def pair_diffs(ws):
        return np.array(
            [np.sum(ws[m] ** 2) - np.sum(ws[m + 1] ** 2) for m in range(l - 1)]
        )

    base = pair_diffs(weights)
    drift = np.zeros((iters, max(l - 1, 0)))
    losses = np.zeros(iters + 1)
    y = np.asarray(y, dtype=float)
    diverged = False
    current = DeepNet(weights=tuple(weights))
    out = forward_trace(current, x)[-1][1]
    losses[0] = 0.5 * float(np.sum((out - y) ** 2))
    for it in range(iters):
        grads = network_gradients(current, x, y)
        weights = [w - step * g for w, g in zip(current.weights, grads)]
        current = DeepNet(weights=tuple(weights))
        out = forward_trace(current, x)[-1][1]
        losses[it + 1] = 0.5 * float(np.sum((out - y) ** 2))
        if l > 1:
            drift[it] = np.abs(pair_diffs(weights) - base)
        if not np.isfinite(losses[it + 1]) or losses[it + 1] > 1e12:
            diverged = True
            drift = drift[: it + 1]
            losses = losses[: it + 2]
            break
    return BalancednessResult(drift=drift, losses=losses, diverged=diverged)
