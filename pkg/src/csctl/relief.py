"""Relief feature weighting, top-Q selection and the combined evaluation.

Relief scores each feature by contrasting its squared differences to the
R nearest same-class neighbors (subtracted) and the R nearest
other-class neighbors (added), summed over every training row.
Neighbors are found by Euclidean distance in the full normalized feature
space, with ties broken by ascending row index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import KernelBank
from .pipeline import (
    FeatureTable,
    TargetDataset,
    concat_feature_maps,
    encode_target,
    normalize_table,
    reshape_expand,
    select_feature_map,
)
from .solver import SolverConfig
from .svm import Metrics, loso_cv


@dataclass
class ReliefParams:
    r_neighbors: int = 3
    q_features: int = 1

    def __post_init__(self):
        if self.r_neighbors < 1:
            raise ValueError("r_neighbors must be >= 1")
        if self.q_features < 1:
            raise ValueError("q_features must be >= 1")


@dataclass
class WeightVector:
    weights: np.ndarray
    order: np.ndarray  # column indices sorted by descending weight, ties ascending


@dataclass
class SelectedTable:
    rows: np.ndarray
    column_index: np.ndarray


def relief_weights(train_rows, train_labels, r_neighbors: int) -> WeightVector:
    """Relief weights over the training rows.

    Requires both classes to have at least ``r_neighbors`` + 1 rows so
    that every row has enough same-class neighbors besides itself.
    """
    rows = np.asarray(train_rows, dtype=float)
    labels = np.asarray(train_labels, dtype=int)
    if rows.ndim != 2 or rows.shape[0] != labels.size:
        raise ValueError("rows must be (M, N0) with one label per row")
    m, n0 = rows.shape
    classes = np.unique(labels)
    if classes.size != 2:
        raise ValueError("Relief weighting needs exactly two classes")
    for c in classes:
        size = int(np.count_nonzero(labels == c))
        if size < r_neighbors + 1:
            raise ValueError(f"class {c} has {size} rows, needs >= {r_neighbors + 1} for R={r_neighbors}")
    diff2 = (rows[:, None, :] - rows[None, :, :]) ** 2
    dist = diff2.sum(axis=2)
    weights = np.zeros(n0)
    index = np.arange(m)
    for i in range(m):
        same = index[(labels == labels[i]) & (index != i)]
        other = index[labels != labels[i]]
        # stable sort keeps ascending row index among equal distances
        hits = same[np.argsort(dist[i, same], kind="stable")][:r_neighbors]
        misses = other[np.argsort(dist[i, other], kind="stable")][:r_neighbors]
        weights += diff2[i, misses].sum(axis=0) - diff2[i, hits].sum(axis=0)
    order = np.argsort(-weights, kind="stable")
    return WeightVector(weights, order)


def select_top_q(table: FeatureTable, weights: WeightVector, q: int) -> SelectedTable:
    """Keep the Q highest-weight columns, in descending-weight order."""
    n0 = table.rows.shape[1]
    if not 1 <= q <= n0:
        raise ValueError(f"q {q} out of range 1..{n0}")
    cols = np.asarray(weights.order[:q])
    return SelectedTable(table.rows[:, cols], cols)


def ss_ck(
    kernels: KernelBank,
    target: TargetDataset,
    map_index: int,
    params: ReliefParams,
    cfg: SolverConfig,
    *,
    c_param: float = 1.0,
    normalize_mode: str = "train-stats",
    map_select: str = "index",
    relief_scope: str = "per_fold",
) -> Metrics:
    """Encode, select a map, expand rows, normalize, Relief-select, classify.

    The leave-one-subject-out harness recomputes normalization and
    Relief weights from each fold's training rows (``relief_scope`` =
    ``per_fold``); the ``global`` scope computes weights once from the
    all-rows-normalized table instead.
    """
    if map_select not in ("index", "concat"):
        raise ValueError(f"unknown map_select mode {map_select!r}")
    stacks = encode_target(target, kernels, cfg)
    if map_select == "index":
        selected = [select_feature_map(s, map_index) for s in stacks]
    else:
        selected = [concat_feature_maps(s, map_index) for s in stacks]
    rows = reshape_expand(selected)
    labels = target.labels
    ids = target.subject_ids
    q = min(params.q_features, rows.shape[1])

    global_weights = None
    if relief_scope == "global":
        full = normalize_table(FeatureTable(rows, labels, ids), mode="all-rows")
        global_weights = relief_weights(full.rows, labels, params.r_neighbors)
    elif relief_scope != "per_fold":
        raise ValueError(f"unknown relief_scope {relief_scope!r}")

    def fold_features(train_mask):
        table = FeatureTable(rows, labels, ids, train_mask)
        norm = normalize_table(table, mode=normalize_mode)
        if global_weights is not None:
            w = global_weights
        else:
            w = relief_weights(norm.rows[train_mask], labels[train_mask], params.r_neighbors)
        return select_top_q(norm, w, q).rows

    return loso_cv(rows, labels, ids, c_param, fold_features)
