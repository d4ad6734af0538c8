"""Array-backed binary decision trees shared by the forest and the booster.

Nodes live in parallel arrays; a row goes left when ``x[feature] <= threshold``.
Thresholds are always an observed training value (the largest value sent
left), so the fitted partition depends only on the order of each column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        rows = np.arange(X.shape[0])
        while active.size:
            n = node[active]
            go_left = X[rows[active], self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_arrays(self, prefix: str) -> dict:
        return {f"{prefix}{k}": getattr(self, k) for k in _FIELDS}

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str) -> "Tree":
        return cls(**{k: np.asarray(arrays[f"{prefix}{k}"]) for k in _FIELDS})


_FIELDS = ("feature", "threshold", "left", "right", "value", "gain", "n_samples")


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.gain, self.n_samples = [], [], []

    def add(self, value, n) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.gain.append(0.0)
        self.n_samples.append(n)
        return len(self.feature) - 1

    def split(self, node, feature, threshold, gain, left, right):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.gain[node] = gain
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(np.array(self.feature, dtype=np.int64),
                    np.array(self.threshold, dtype=np.float64),
                    np.array(self.left, dtype=np.int64),
                    np.array(self.right, dtype=np.int64),
                    np.array(self.value, dtype=np.float64),
                    np.array(self.gain, dtype=np.float64),
                    np.array(self.n_samples, dtype=np.int64))


def _xlog2x(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)


def binary_entropy(p):
    """Entropy in bits of a Bernoulli(p)."""
    p = np.asarray(p, dtype=np.float64)
    return -(_xlog2x(p) + _xlog2x(1.0 - p))


def _sorted_columns(X, idx, feats):
    sub = X[np.ix_(idx, feats)]
    order = np.argsort(sub, axis=0, kind="stable")
    vals = np.take_along_axis(sub, order, axis=0)
    return order, vals


def best_entropy_split(X, y, idx, feats):
    """Highest information-gain split of rows ``idx`` over candidate ``feats``.

    Returns ``(gain, feature, threshold, left_mask)`` or None when every
    candidate column is constant on ``idx``.
    """
    n = idx.size
    order, vals = _sorted_columns(X, idx, feats)
    ys = y[idx][order]
    cum_pos = np.cumsum(ys, axis=0)[:-1]
    valid = vals[:-1] < vals[1:]
    if not valid.any():
        return None
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    total_pos = cum_pos[-1] + ys[-1]
    parent = binary_entropy(total_pos[0] / n)
    children = (n_left * binary_entropy(cum_pos / n_left)
                + n_right * binary_entropy((total_pos - cum_pos) / n_right)) / n
    gain = np.where(valid, parent - children, -np.inf)
    # column-major argmax: ties go to the earlier candidate feature, then the lower cut
    flat = np.argmax(gain.T)
    j, i = divmod(int(flat), n - 1)
    threshold = vals[i, j]
    feature = int(feats[j])
    left_mask = X[idx, feature] <= threshold
    return max(float(gain[i, j]), 0.0), feature, float(threshold), left_mask


def grow_entropy_tree(X, y, idx, max_features: int, rng, min_samples_split: int = 2) -> Tree:
    """Grow a classification tree to purity on rows ``idx`` (duplicates allowed)."""
    d = X.shape[1]
    b = _Builder()
    stack = [(b.add(float(y[idx].mean()), idx.size), idx)]
    while stack:
        node, rows = stack.pop()
        n = rows.size
        pos = int(y[rows].sum())
        if n < min_samples_split or pos == 0 or pos == n:
            continue
        perm = rng.permutation(d)
        found = None
        # like the usual implementations, keep drawing features past max_features
        # only while every drawn column is constant on this node
        for start in range(0, d, max_features):
            feats = perm[:start + max_features] if start else perm[:max_features]
            found = best_entropy_split(X, y, rows, feats)
            if found is not None:
                break
        if found is None:
            continue
        gain, feature, threshold, left_mask = found
        lrows, rrows = rows[left_mask], rows[~left_mask]
        lnode = b.add(float(y[lrows].mean()), lrows.size)
        rnode = b.add(float(y[rrows].mean()), rrows.size)
        b.split(node, feature, threshold, gain, lnode, rnode)
        stack.append((rnode, rrows))
        stack.append((lnode, lrows))
    return b.build()


def best_newton_split(X, g, h, idx, feats, reg_lambda, min_child_weight):
    """Best second-order split; returns ``(gain, feature, threshold, left_mask)`` or None.

    ``gain`` is the usual structure-score improvement
    ``0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l))`` before the gamma penalty.
    """
    n = idx.size
    if n < 2:
        return None
    order, vals = _sorted_columns(X, idx, feats)
    gs = g[idx][order]
    hs = h[idx][order]
    GL = np.cumsum(gs, axis=0)[:-1]
    HL = np.cumsum(hs, axis=0)[:-1]
    G = GL[-1] + gs[-1]
    H = HL[-1] + hs[-1]
    GR = G - GL
    HR = H - HL
    valid = (vals[:-1] < vals[1:]) & (HL >= min_child_weight) & (HR >= min_child_weight)
    if not valid.any():
        return None
    score = GL ** 2 / (HL + reg_lambda) + GR ** 2 / (HR + reg_lambda)
    parent = G[0] ** 2 / (H[0] + reg_lambda)
    gain = np.where(valid, 0.5 * (score - parent), -np.inf)
    flat = np.argmax(gain.T)
    j, i = divmod(int(flat), n - 1)
    feature = int(feats[j])
    threshold = vals[i, j]
    return float(gain[i, j]), feature, float(threshold), X[idx, feature] <= threshold


def grow_newton_tree(X, g, h, idx, feats, max_depth: int, reg_lambda: float,
                     gamma: float, min_child_weight: float) -> Tree:
    """Depth-limited regression tree on gradient statistics; leaves hold ``-G/(H+lambda)``."""
    b = _Builder()

    def leaf_value(rows):
        return -float(g[rows].sum()) / (float(h[rows].sum()) + reg_lambda)

    stack = [(b.add(leaf_value(idx), idx.size), idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth:
            continue
        found = best_newton_split(X, g, h, rows, feats, reg_lambda, min_child_weight)
        if found is None or found[0] - gamma <= 0:
            continue
        gain, feature, threshold, left_mask = found
        lrows, rrows = rows[left_mask], rows[~left_mask]
        lnode = b.add(leaf_value(lrows), lrows.size)
        rnode = b.add(leaf_value(rrows), rrows.size)
        b.split(node, feature, threshold, gain, lnode, rnode)
        stack.append((rnode, rrows, depth + 1))
        stack.append((lnode, lrows, depth + 1))
    return b.build()
