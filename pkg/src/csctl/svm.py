"""Deterministic linear soft-margin SVM, confusion metrics and LOSO harness.

The trainer runs dual coordinate descent with a fixed index order (no
shuffling), so identical inputs give bitwise identical models.  The bias
is handled by augmenting every sample with a constant feature, which
keeps the dual a plain box-constrained quadratic program.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

SVM_TOL = 1e-6
SVM_MAX_EPOCHS = 10_000


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    c_param: float
    dual_coef: np.ndarray = field(default=None, repr=False)


@dataclass
class FoldRecord:
    subject_id: str
    truth: list[int]
    pred: list[int]
    valid: bool
    train_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        digest = hashlib.sha1(",".join(sorted(self.train_ids)).encode()).hexdigest()[:12]
        return {
            "subject_id": self.subject_id,
            "truth": list(self.truth),
            "pred": list(self.pred),
            "valid": self.valid,
            "train_ids_hash": digest,
        }


@dataclass
class Metrics:
    """Confusion counts with derived rates; positive class is label 1.

    Rates with a zero denominator are None (undefined), never 0.
    """

    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0
    per_fold: list[FoldRecord] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.total if self.total else None

    @property
    def sensitivity(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def specificity(self) -> float | None:
        neg = self.tn + self.fp
        return self.tn / neg if neg else None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "confusion": {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp},
            "per_fold": [f.to_dict() for f in self.per_fold],
        }


METRICS_CSV_HEADER = "accuracy_pct,sensitivity_pct,specificity_pct,tp,fn,tn,fp"


def _pct(rate: float | None) -> str:
    return "" if rate is None else f"{100.0 * rate:.1f}"


def metrics_csv_line(metrics: Metrics) -> str:
    """One-line CSV rendering with percentages at one decimal."""
    return ",".join(
        [
            _pct(metrics.accuracy),
            _pct(metrics.sensitivity),
            _pct(metrics.specificity),
            str(metrics.tp),
            str(metrics.fn),
            str(metrics.tn),
            str(metrics.fp),
        ]
    )


def train_linear_svm(X: np.ndarray, y: np.ndarray, c_param: float) -> LinearModel:
    """Fit the soft-margin linear SVM by deterministic dual coordinate descent.

    ``y`` holds labels in {-1, +1}; stops when the largest projected
    gradient over an epoch drops below 1e-6, with a 10,000 epoch cap.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if c_param <= 0:
        raise ValueError("c_param must be positive")
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, q) with one label per row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")
    classes = set(np.unique(y))
    if not classes <= {-1.0, 1.0}:
        raise ValueError("labels must lie in {-1, +1}")
    if len(classes) < 2:
        raise ValueError("training data contains a single class")
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    n = Xa.shape[0]
    q_diag = (Xa ** 2).sum(axis=1)
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    for _ in range(SVM_MAX_EPOCHS):
        max_pg = 0.0
        for i in range(n):
            grad = y[i] * float(w @ Xa[i]) - 1.0
            if alpha[i] == 0.0:
                pg = min(grad, 0.0)
            elif alpha[i] == c_param:
                pg = max(grad, 0.0)
            else:
                pg = grad
            apg = abs(pg)
            if apg > max_pg:
                max_pg = apg
            if apg > 1e-14:
                prev = alpha[i]
                alpha[i] = min(max(prev - grad / q_diag[i], 0.0), c_param)
                w = w + (alpha[i] - prev) * y[i] * Xa[i]
        if max_pg <= SVM_TOL:
            break
    return LinearModel(w[:-1].copy(), float(w[-1]), c_param, alpha)


def dual_objective(X: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Dual value 0.5 a'Qa - sum(a) for the bias-augmented gram matrix."""
    Xa = np.hstack([np.asarray(X, dtype=float), np.ones((len(alpha), 1))])
    y = np.asarray(y, dtype=float)
    q = (y[:, None] * Xa) @ (y[:, None] * Xa).T
    alpha = np.asarray(alpha, dtype=float)
    return 0.5 * float(alpha @ q @ alpha) - float(alpha.sum())


def predict(model: LinearModel, X: np.ndarray) -> np.ndarray:
    """Labels in {-1, +1}; exact boundary points go to +1."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.weights.size:
        raise ValueError(f"feature count {X.shape} does not match model dimension {model.weights.size}")
    scores = X @ model.weights + model.bias
    return np.where(scores >= 0.0, 1, -1)


def confusion_metrics(pred, truth) -> Metrics:
    """Count a confusion matrix; any label equal to 1 is the positive class."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction length {pred.shape} differs from truth {truth.shape}")
    pos_pred = pred == 1
    pos_truth = truth == 1
    return Metrics(
        tp=int(np.count_nonzero(pos_pred & pos_truth)),
        fn=int(np.count_nonzero(~pos_pred & pos_truth)),
        tn=int(np.count_nonzero(~pos_pred & ~pos_truth)),
        fp=int(np.count_nonzero(pos_pred & ~pos_truth)),
    )


def loso_cv(rows, labels, subject_ids, c_param: float, fold_features=None, trainer=train_linear_svm) -> Metrics:
    """Leave-one-subject-out cross-validation with per-fold feature building.

    ``fold_features(train_mask)`` may return a fold-specific feature
    matrix for all rows (e.g. normalized and selected from the fold's
    training statistics); by default ``rows`` is used as-is.  Folds whose
    training split is single-class are marked invalid and reported, not
    silently dropped.
    """
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels, dtype=int)
    subject_ids = list(subject_ids)
    subjects = list(dict.fromkeys(subject_ids))
    if len(subjects) < 2:
        raise ValueError("LOSO needs at least two subjects")
    ids = np.asarray(subject_ids)
    metrics = Metrics()
    for held_out in subjects:
        test_mask = ids == held_out
        train_mask = ~test_mask
        train_ids = tuple(sorted(set(ids[train_mask])))
        train_labels = labels[train_mask]
        truth = [int(t) for t in labels[test_mask]]
        if len(set(train_labels)) < 2:
            metrics.per_fold.append(FoldRecord(held_out, truth, [], False, train_ids))
            continue
        feats = rows if fold_features is None else np.asarray(fold_features(train_mask), dtype=float)
        model = trainer(feats[train_mask], np.where(train_labels == 1, 1.0, -1.0), c_param)
        pred01 = [int(p) for p in (predict(model, feats[test_mask]) == 1).astype(int)]
        fold = confusion_metrics(np.asarray(pred01), labels[test_mask])
        metrics.tp += fold.tp
        metrics.fn += fold.fn
        metrics.tn += fold.tn
        metrics.fp += fold.fp
        metrics.per_fold.append(FoldRecord(held_out, truth, pred01, True, train_ids))
    return metrics
