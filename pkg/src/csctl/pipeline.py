"""Target-domain encoding, map selection, row expansion and normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import KernelBank
from .solver import SolverConfig, solve_coding

VARIANCE_GUARD = 1e-12


@dataclass
class TargetDataset:
    """Labeled per-subject blocks: (M, H0, N) values, one label per subject."""

    blocks: np.ndarray
    labels: np.ndarray
    subject_ids: list[str]

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.subject_ids = list(self.subject_ids)
        if self.blocks.ndim != 3:
            raise ValueError("blocks must be a (M, H0, N) array")
        m = self.blocks.shape[0]
        if len(self.labels) != m or len(self.subject_ids) != m:
            raise ValueError("blocks, labels and subject ids must have equal length")
        if m and not set(np.unique(self.labels)) <= {0, 1}:
            raise ValueError("labels must lie in {0, 1}")

    @property
    def m(self) -> int:
        return self.blocks.shape[0]

    @property
    def h0(self) -> int:
        return self.blocks.shape[1]

    @property
    def n(self) -> int:
        return self.blocks.shape[2]

    def subset(self, indices) -> "TargetDataset":
        indices = list(indices)
        return TargetDataset(
            self.blocks[indices],
            self.labels[indices],
            [self.subject_ids[i] for i in indices],
        )


@dataclass
class FeatureTable:
    """Per-subject feature rows with labels and a train/test partition."""

    rows: np.ndarray
    labels: np.ndarray
    subject_ids: list[str]
    train_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.train_mask is None:
            self.train_mask = np.ones(self.rows.shape[0], dtype=bool)
        self.train_mask = np.asarray(self.train_mask, dtype=bool)
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        m = self.rows.shape[0]
        if len(self.labels) != m or len(self.subject_ids) != m or self.train_mask.size != m:
            raise ValueError("rows, labels, ids and split must have equal length")


def local_normalize_block(block: np.ndarray) -> np.ndarray:
    """Standardize a block to zero mean, unit variance over all entries.

    Constant blocks return all zeros (variance guard)."""
    block = np.asarray(block, dtype=float)
    var = block.var()
    if var <= VARIANCE_GUARD:
        return np.zeros_like(block)
    return (block - block.mean()) / np.sqrt(var)


def encode_target(target: TargetDataset, kernels: KernelBank, cfg: SolverConfig) -> list[np.ndarray]:
    """Code each locally normalized subject block against a fixed bank."""
    if kernels.padded_shape != (target.h0, target.n):
        raise ValueError(
            f"bank shape {kernels.padded_shape} does not match target blocks {(target.h0, target.n)}"
        )
    return [solve_coding(local_normalize_block(b), kernels, cfg) for b in target.blocks]


def select_feature_map(stack: np.ndarray, index: int) -> np.ndarray:
    """Pick the ``index``-th map (1-based) from a (K, H, W) stack."""
    stack = np.asarray(stack)
    k = stack.shape[0]
    if not 1 <= index <= k:
        raise ValueError(f"map index {index} out of range 1..{k}")
    return stack[index - 1]


def concat_feature_maps(stack: np.ndarray, count: int) -> np.ndarray:
    """Stack the first ``count`` maps vertically into one (count*H, W) matrix."""
    stack = np.asarray(stack)
    if not 1 <= count <= stack.shape[0]:
        raise ValueError(f"map count {count} out of range 1..{stack.shape[0]}")
    return np.concatenate(list(stack[:count]), axis=0)


def reshape_expand(selected: list[np.ndarray]) -> np.ndarray:
    """Flatten each subject's selected map row-major into one feature row."""
    mats = [np.asarray(s, dtype=float) for s in selected]
    if not mats:
        return np.zeros((0, 0))
    shape = mats[0].shape
    for i, mat in enumerate(mats):
        if mat.shape != shape:
            raise ValueError(f"subject {i} has shape {mat.shape}, expected {shape}")
    return np.stack([m.reshape(-1) for m in mats])


def normalize_table(table: FeatureTable, mode: str = "train-stats") -> FeatureTable:
    """Min-max scale each column to [0, 1].

    ``train-stats`` (default) computes the scaling from training rows
    only, so test rows may land outside [0, 1] and are not clipped;
    ``all-rows`` uses every row.  Columns that are constant over the
    statistics rows map to zero.
    """
    if mode not in ("train-stats", "all-rows"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "train-stats":
        stats_rows = table.rows[table.train_mask]
        if stats_rows.shape[0] == 0:
            raise ValueError("training split is empty; cannot derive normalization statistics")
    else:
        stats_rows = table.rows
    lo = stats_rows.min(axis=0)
    hi = stats_rows.max(axis=0)
    span = hi - lo
    constant = span == 0
    safe_span = np.where(constant, 1.0, span)
    scaled = (table.rows - lo) / safe_span
    scaled[:, constant] = 0.0
    return FeatureTable(scaled, table.labels, table.subject_ids, table.train_mask)
