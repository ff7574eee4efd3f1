"""Planted synthetic data for benchmarks, fixtures and sanity checks.

Blocks are built from two spectrally separated unit-norm textures (a
smooth blob and a checkerboard) convolved with sparse random maps.
Target classes use one texture each; source blocks alternate between
the two textures, so banks learned on the source can explain either
class.
"""

from __future__ import annotations

import numpy as np

from .augment import SourceDomain
from .ops import conv2_circular
from .pipeline import TargetDataset, local_normalize_block


def planted_kernel_pair(size: tuple[int, int] = (4, 4)) -> tuple[np.ndarray, np.ndarray]:
    """Two unit-norm textures with near-disjoint spectra: blob and checkerboard."""
    k1, k2 = size
    ii = np.arange(k1)[:, None] - (k1 - 1) / 2.0
    jj = np.arange(k2)[None, :] - (k2 - 1) / 2.0
    blob = np.exp(-0.5 * (ii ** 2 + jj ** 2))
    blob /= np.linalg.norm(blob)
    check = np.fromfunction(lambda i, j: (-1.0) ** (i + j), (k1, k2))
    check /= np.linalg.norm(check)
    return blob, check


def sparse_map(shape: tuple[int, int], density: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli support with positive amplitudes bounded away from zero.

    Positive amplitudes give the active class a per-column mean shift, so
    planted datasets stay linearly separable after encoding."""
    support = rng.random(shape) < density
    values = rng.uniform(0.5, 1.5, shape)
    return np.where(support, values, 0.0)


def planted_block(kernel: np.ndarray, shape, density: float, noise_sigma: float, rng) -> np.ndarray:
    block = conv2_circular(kernel, sparse_map(shape, density, rng))
    if noise_sigma > 0:
        block = block + noise_sigma * rng.standard_normal(shape)
    return block


def make_planted_source(
    n_blocks: int = 24,
    h0: int = 13,
    n: int = 26,
    seed: int = 0,
    density: float = 0.04,
    noise_sigma: float = 0.0,
    kernel_size: tuple[int, int] = (4, 4),
) -> SourceDomain:
    """Unlabeled blocks alternating between the two textures, locally normalized."""
    rng = np.random.default_rng(seed)
    k_a, k_b = planted_kernel_pair(kernel_size)
    blocks = []
    for i in range(n_blocks):
        kernel = k_a if i % 2 else k_b
        blocks.append(local_normalize_block(planted_block(kernel, (h0, n), density, noise_sigma, rng)))
    return SourceDomain(np.stack(blocks), h0, n)


def make_planted_target(
    n_subjects: int = 20,
    h0: int = 13,
    n: int = 26,
    seed: int = 1,
    density: float = 0.04,
    noise_sigma: float = 0.02,
    kernel_size: tuple[int, int] = (4, 4),
) -> TargetDataset:
    """Two-class target: odd subjects use one texture, even subjects the other.

    Each class places its texture on a fixed canonical site layout with
    per-subject amplitude jitter, so the class signal is consistent per
    feature column (not rare random spikes)."""
    rng = np.random.default_rng(seed)
    k_a, k_b = planted_kernel_pair(kernel_size)
    n_sites = max(1, int(round(density * h0 * n)))
    flat = h0 * n
    sites = {
        0: rng.choice(flat, size=n_sites, replace=False),
        1: rng.choice(flat, size=n_sites, replace=False),
    }
    blocks, labels, ids = [], [], []
    for i in range(n_subjects):
        label = i % 2
        kernel = k_a if label == 1 else k_b
        emap = np.zeros(flat)
        emap[sites[label]] = rng.uniform(0.7, 1.3, n_sites)
        block = conv2_circular(kernel, emap.reshape(h0, n))
        if noise_sigma > 0:
            block = block + noise_sigma * rng.standard_normal((h0, n))
        blocks.append(block)
        labels.append(label)
        ids.append(f"subj{i + 1:02d}")
    return TargetDataset(np.stack(blocks), np.asarray(labels), ids)
