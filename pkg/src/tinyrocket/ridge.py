"""Ridge-regression classifier head on PPV features."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

DEFAULT_LAMBDAS = tuple(10.0 ** p for p in range(-3, 4))


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    weights: np.ndarray  # (T, K)
    biases: np.ndarray  # (K,)
    class_labels: tuple = ()
    lam: float = 0.0
    gcv_scores: dict = field(default_factory=dict)

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LinearClassifier):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases)
                and tuple(self.class_labels) == tuple(other.class_labels)
                and self.lam == other.lam)


def one_vs_all_targets(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = -np.ones((len(labels), n_classes))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def _solve(gram, rhs, lam, n_features):
    system = gram.copy()
    system[np.arange(n_features), np.arange(n_features)] += lam
    if lam == 0.0 and np.linalg.cond(system) > 1e12:
        raise ValueError("ill-conditioned: provide λ>0")
    try:
        factor = linalg.cho_factor(system)
    except linalg.LinAlgError as exc:
        raise ValueError("ill-conditioned: provide λ>0") from exc
    return linalg.cho_solve(factor, rhs), factor


def train_ridge(features, labels, lambdas=DEFAULT_LAMBDAS, n_classes: int | None = None,
                class_labels=None) -> LinearClassifier:
    """Fit a one-vs-all ridge classifier with an unpenalised intercept.

    Each ``lam`` in ``lambdas`` solves ``(X'X + lam I) W = X'Y`` on the
    intercept-augmented design; the one with the lowest generalised
    cross-validation score wins (first in grid order on ties).  Features are
    used as-is, without centring.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, t = x.shape
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    k = max(k, 2)
    present = np.bincount(labels, minlength=k)
    if np.any(present == 0):
        raise ValueError(f"class absent from training data: {int(np.argmin(present))}")
    if n < k:
        raise ValueError("need at least one sample per class")

    design = np.hstack([x, np.ones((n, 1))])
    targets = one_vs_all_targets(labels, k)
    gram = design.T @ design
    rhs = design.T @ targets

    best = None
    scores = {}
    for lam in lambdas:
        lam = float(lam)
        beta, factor = _solve(gram, rhs, lam, t)
        resid = targets - design @ beta
        dof = n - np.trace(linalg.cho_solve(factor, gram))
        gcv = n * float(np.sum(resid ** 2)) / dof ** 2 if dof > 1e-12 else np.inf
        scores[lam] = gcv
        if best is None or gcv < best[0]:
            best = (gcv, lam, beta)

    _, lam, beta = best
    if class_labels is None:
        class_labels = tuple(str(i) for i in range(k))
    return LinearClassifier(weights=beta[:t].copy(), biases=beta[t].copy(),
                            class_labels=tuple(class_labels), lam=lam, gcv_scores=scores)


def decision_scores(features, model: LinearClassifier) -> np.ndarray:
    """float32 scores ``b + sum_j t_j W_j``, accumulated in feature order."""
    t = np.asarray(features, dtype=np.float32)
    single = t.ndim == 1
    t = np.atleast_2d(t)
    if t.shape[1] != model.num_features:
        raise ValueError("feature dimension mismatch")
    w = model.weights.astype(np.float32)
    scores = np.broadcast_to(model.biases.astype(np.float32), (t.shape[0], model.num_classes)).copy()
    for j in range(model.num_features):
        scores += t[:, j, None] * w[j]
    return scores[0] if single else scores


def predict_float(features, model: LinearClassifier):
    """Return ``(class_index, scores)``; ties go to the lowest class index."""
    scores = decision_scores(features, model)
    return np.argmax(scores, axis=-1), scores
