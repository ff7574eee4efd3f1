"""Seeded kernel-bank search and the three end-to-end pipeline variants.

The search enumerates (kernel count, feature map index, seed, Q) trials,
scores each by leave-one-subject-out accuracy on the kernel-optimization
split, and keeps the best bank.  Ties break toward fewer kernels, then
lower map index, lower seed and smaller Q.  Trials are pure functions of
their coordinates, so they can be evaluated in any order (or in a thread
pool) and merged deterministically.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .augment import SourceDomain
from .ops import KernelBank
from .pipeline import TargetDataset, local_normalize_block
from .relief import ReliefParams, ss_ck
from .solver import SolverConfig, learn_kernels
from .svm import Metrics

VARIANTS = ("csc_s2", "cstl_s2", "cstlok_s2")


@dataclass
class SearchSpace:
    """Trial coordinates of the kernel search.

    ``featuremap_indices`` = None enumerates 1..kernel_count per count;
    ``q_grid`` = None derives a coarse grid from the row width at run
    time.  ``split_ratio`` is the fraction of each class assigned to the
    kernel-optimization split.
    """

    kernel_counts: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    seeds: tuple[int, ...] = tuple(range(10))
    q_grid: tuple[int, ...] | None = None
    split_ratio: float = 0.5
    split_seed: int = 0
    featuremap_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        self.kernel_counts = tuple(int(k) for k in self.kernel_counts)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.kernel_counts or min(self.kernel_counts) < 1:
            raise ValueError("kernel_counts must be a nonempty tuple of positive counts")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.q_grid is not None:
            self.q_grid = tuple(int(q) for q in self.q_grid)
            if not self.q_grid or min(self.q_grid) < 1:
                raise ValueError("q_grid must be nonempty with positive entries")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie strictly between 0 and 1")
        if self.featuremap_indices is not None:
            self.featuremap_indices = tuple(int(j) for j in self.featuremap_indices)
            if min(self.featuremap_indices) < 1:
                raise ValueError("featuremap indices must be >= 1")

    def map_indices_for(self, kernel_count: int) -> tuple[int, ...]:
        if self.featuremap_indices is None:
            return tuple(range(1, kernel_count + 1))
        return tuple(j for j in sorted(self.featuremap_indices) if j <= kernel_count)


@dataclass
class TrialResult:
    kernel_count: int
    featuremap_index: int
    seed: int
    q: int
    a1_metrics: Metrics
    kernel_ref: str

    @property
    def a1_accuracy(self) -> float | None:
        return self.a1_metrics.accuracy

    def coords(self) -> tuple[int, int, int, int]:
        return (self.kernel_count, self.featuremap_index, self.seed, self.q)

    def to_dict(self) -> dict:
        return {
            "kernel_count": self.kernel_count,
            "featuremap_index": self.featuremap_index,
            "seed": self.seed,
            "q": self.q,
            "kernel_ref": self.kernel_ref,
            "a1_metrics": self.a1_metrics.to_dict(),
        }


@dataclass
class SearchResult:
    trials: list[TrialResult]
    best: TrialResult
    best_bank: KernelBank


@dataclass
class Report:
    variant: str
    metrics: Metrics
    selected: dict
    config: dict
    timings: dict = field(default_factory=dict)
    trials: list[TrialResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        import scipy

        return {
            "variant": self.variant,
            "metrics": self.metrics.to_dict(),
            "selected": self.selected,
            "trials": [t.to_dict() for t in self.trials],
            "config": self.config,
            "timings": self.timings,
            "versions": {
                "csctl": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }


def default_q_grid(n0: int) -> tuple[int, ...]:
    """Coarse dyadic grid {ceil(n0/16), ceil(n0/8), ceil(n0/4), ceil(n0/2), n0}."""
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    grid = sorted({math.ceil(n0 / 16), math.ceil(n0 / 8), math.ceil(n0 / 4), math.ceil(n0 / 2), n0})
    return tuple(grid)


def split_kernel_sets(target: TargetDataset, ratio: float, seed: int) -> tuple[TargetDataset, TargetDataset]:
    """Subject-level class-stratified split into (optimization, evaluation) sets.

    Per class, round(ratio * size) subjects go to the first set, with at
    least one subject kept on each side.  Deterministic given the seed.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie strictly between 0 and 1")
    labels = target.labels
    rng = np.random.default_rng(seed)
    a1_idx: list[int] = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise ValueError(f"class {cls} has {members.size} subjects, needs >= 2 to stratify")
        take = int(math.floor(ratio * members.size + 0.5))
        take = min(max(take, 1), members.size - 1)
        picked = rng.permutation(members)[:take]
        a1_idx.extend(int(i) for i in picked)
    a1_set = set(a1_idx)
    a1 = target.subset([i for i in range(target.m) if i in a1_set])
    a2 = target.subset([i for i in range(target.m) if i not in a1_set])
    return a1, a2


def target_as_source(target: TargetDataset) -> SourceDomain:
    """Reuse a target's locally normalized blocks as an unlabeled source."""
    blocks = np.stack([local_normalize_block(b) for b in target.blocks])
    return SourceDomain(blocks, target.h0, target.n)


def best_trial(trials: list[TrialResult]) -> TrialResult:
    """Ordered argmax over accuracy with the documented tie-break."""
    if not trials:
        raise ValueError("no trials to select from")
    ordered = sorted(trials, key=lambda t: t.coords())
    best = ordered[0]
    best_acc = -1.0 if best.a1_accuracy is None else best.a1_accuracy
    for t in ordered[1:]:
        acc = -1.0 if t.a1_accuracy is None else t.a1_accuracy
        if acc > best_acc:
            best, best_acc = t, acc
    return best


def search_optimal_kernel(
    source: SourceDomain,
    a1: TargetDataset,
    space: SearchSpace,
    cfg: SolverConfig,
    *,
    kernel_size: tuple[int, int],
    r_neighbors: int = 3,
    c_param: float = 1.0,
    normalize_mode: str = "train-stats",
    map_select: str = "index",
    relief_scope: str = "per_fold",
    threads: int = 1,
) -> SearchResult:
    """Exhaustive deterministic trial sweep; returns the winning bank and table."""
    n0 = a1.h0 * a1.n
    q_grid = space.q_grid if space.q_grid is not None else default_q_grid(n0)
    banks: dict[tuple[int, int], KernelBank] = {}

    def bank_for(kernel_count: int, seed: int) -> KernelBank:
        key = (kernel_count, seed)
        if key not in banks:
            banks[key] = learn_kernels(source, kernel_count, kernel_size, replace(cfg, seed=seed))
        return banks[key]

    coords = []
    for i in sorted(space.kernel_counts):
        for j in space.map_indices_for(i):
            for s in sorted(space.seeds):
                for q in sorted(q_grid):
                    coords.append((i, j, s, q))
    for i in sorted(space.kernel_counts):
        for s in sorted(space.seeds):
            bank_for(i, s)

    def evaluate(coord) -> TrialResult:
        i, j, s, q = coord
        bank = banks[(i, s)]
        metrics = ss_ck(
            bank,
            a1,
            j,
            ReliefParams(r_neighbors, min(q, n0 if map_select == "index" else j * n0)),
            cfg,
            c_param=c_param,
            normalize_mode=normalize_mode,
            map_select=map_select,
            relief_scope=relief_scope,
        )
        return TrialResult(i, j, s, q, metrics, f"k{i}_s{s}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(zip(coords, pool.map(evaluate, coords)))
    else:
        results = {coord: evaluate(coord) for coord in coords}
    trials = [results[coord] for coord in coords]
    best = best_trial(trials)
    return SearchResult(trials, best, banks[(best.kernel_count, best.seed)])


def run_pipeline(
    variant: str,
    source: SourceDomain | None,
    target: TargetDataset,
    space: SearchSpace,
    cfg: SolverConfig,
    *,
    kernel_size: tuple[int, int],
    kernel_count: int = 2,
    map_index: int = 1,
    q: int | None = None,
    r_neighbors: int = 3,
    c_param: float = 1.0,
    normalize_mode: str = "train-stats",
    map_select: str = "index",
    relief_scope: str = "per_fold",
    kernels_from_a1: bool = False,
    no_selection: bool = False,
    threads: int = 1,
    config_echo: dict | None = None,
) -> Report:
    """Run one pipeline variant end to end and assemble its report.

    ``csc_s2`` learns kernels from the target's own normalized blocks,
    ``cstl_s2`` from the source domain; both evaluate with fixed
    (map_index, q).  ``cstlok_s2`` splits the target, searches the trial
    space on the optimization split and evaluates the winner on the
    held-back split.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    needs_source = variant == "cstl_s2" or (variant == "cstlok_s2" and not kernels_from_a1)
    if needs_source and source is None:
        raise ValueError(f"variant {variant} requires a source domain")
    n0 = target.h0 * target.n * (map_index if map_select == "concat" else 1)
    if no_selection:
        q = n0
    elif q is None:
        q = math.ceil(n0 / 4)
    timings: dict[str, float] = {}
    eval_kwargs = dict(
        c_param=c_param,
        normalize_mode=normalize_mode,
        map_select=map_select,
        relief_scope=relief_scope,
    )
    trials: list[TrialResult] = []

    if variant in ("csc_s2", "cstl_s2"):
        learn_source = target_as_source(target) if variant == "csc_s2" else source
        t0 = time.perf_counter()
        bank = learn_kernels(learn_source, kernel_count, kernel_size, cfg)
        timings["learn_kernels_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        metrics = ss_ck(bank, target, map_index, ReliefParams(r_neighbors, q), cfg, **eval_kwargs)
        timings["evaluate_s"] = time.perf_counter() - t0
        selected = {
            "kernel_count": kernel_count,
            "featuremap_index": map_index,
            "seed": cfg.seed,
            "q": q,
        }
    else:
        t0 = time.perf_counter()
        a1, a2 = split_kernel_sets(target, space.split_ratio, space.split_seed)
        timings["split_s"] = time.perf_counter() - t0
        search_source = target_as_source(a1) if kernels_from_a1 else source
        search_space = space
        if no_selection:
            search_space = replace(space, q_grid=(n0,))
        t0 = time.perf_counter()
        result = search_optimal_kernel(
            search_source,
            a1,
            search_space,
            cfg,
            kernel_size=kernel_size,
            r_neighbors=r_neighbors,
            threads=threads,
            **eval_kwargs,
        )
        timings["search_s"] = time.perf_counter() - t0
        trials = result.trials
        best = result.best
        t0 = time.perf_counter()
        metrics = ss_ck(
            result.best_bank,
            a2,
            best.featuremap_index,
            ReliefParams(r_neighbors, best.q),
            cfg,
            **eval_kwargs,
        )
        timings["evaluate_s"] = time.perf_counter() - t0
        selected = {
            "kernel_count": best.kernel_count,
            "featuremap_index": best.featuremap_index,
            "seed": best.seed,
            "q": best.q,
            "a1_accuracy": best.a1_accuracy,
            "a1_subjects": list(a1.subject_ids),
            "a2_subjects": list(a2.subject_ids),
        }

    return Report(
        variant=variant,
        metrics=metrics,
        selected=selected,
        config=config_echo if config_echo is not None else {},
        timings=timings,
        trials=trials,
    )
