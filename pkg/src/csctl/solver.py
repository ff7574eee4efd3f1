"""Alternating ADMM solvers for kernel learning and sparse map coding.

Two subproblems alternate: coding (kernels fixed, maps updated through a
splitting with a soft-threshold proximal step) and dictionary learning
(maps fixed, kernels updated through a support-masked unit-ball
projection).  Both use the per-frequency low-rank solves from
:mod:`csctl.ops`, and both come in a plain form and a relaxed form with
relaxation factor gamma applied to the (split, dual) pair.  At gamma = 1
the relaxed iteration reproduces the plain one exactly.

All iterates are real, so the solver runs its transforms on the real
half-spectrum; the per-frequency systems map conjugate-symmetric right
hand sides to conjugate-symmetric solutions, which keeps the half-grid
solve exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .ops import (
    KernelBank,
    apply_inv_lemma_coding,
    apply_inv_lemma_dict,
    pad_kernel,
    project_kernel,
    soft_threshold,
    support_mask,
)


@dataclass
class SolverConfig:
    """Knobs of the alternating solver.

    lam is the data-fit weight of the splitting (the inverse of the
    augmented-Lagrangian penalty), alpha the shrinkage threshold, gamma
    the relaxation factor in (0, 2].  residual_tol = 0 disables early
    stopping so iteration counts are exact.
    """

    lam: float = 1.0
    alpha: float = 0.05
    gamma: float = 1.0
    outer_iters: int = 100
    coding_iters: int = 10
    dict_iters: int = 10
    residual_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0.0 < self.gamma <= 2.0:
            raise ValueError(f"gamma must lie in (0, 2], got {self.gamma}")
        for name in ("outer_iters", "coding_iters", "dict_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be nonnegative")


@dataclass
class CodingState:
    """Splitting triple of the coding subproblem, each (..., K, H, W)."""

    e: np.ndarray
    b: np.ndarray
    u: np.ndarray


@dataclass
class DictState:
    """Splitting triple of the dictionary subproblem, each (K, H, W) padded."""

    d: np.ndarray
    c: np.ndarray
    v: np.ndarray


def init_coding_state(k: int, shape: tuple[int, int]) -> CodingState:
    z = np.zeros((k,) + tuple(shape))
    return CodingState(z.copy(), z.copy(), z.copy())


def _rfft2(x):
    return np.fft.rfft2(x, axes=(-2, -1))


def _irfft2(x, shape):
    return np.fft.irfft2(x, s=shape, axes=(-2, -1))


class _CodingTerms:
    """Per-solve constants of the coding subproblem on the half-spectrum."""

    def __init__(self, kernels: KernelBank, x: np.ndarray, lam: float):
        self.shape = kernels.padded_shape
        self.lam = lam
        self.g_hat = np.conj(_rfft2(kernels.padded()))
        self.den = 1.0 + lam * (np.abs(self.g_hat) ** 2).sum(axis=0)
        x_hat = _rfft2(np.asarray(x, dtype=float))
        if x_hat.ndim == 2:
            self.rhs0 = lam * self.g_hat * x_hat[None]
        else:
            self.rhs0 = lam * self.g_hat[None] * x_hat[:, None]

    def predict(self, b, u, alpha):
        """Data-fit solve, shrinkage, dual ascent; returns (e, b_bar, u_bar)."""
        rhs = self.rhs0 + _rfft2(b - u)
        e = _irfft2(apply_inv_lemma_coding(self.g_hat, rhs, self.lam, den=self.den), self.shape)
        s = e + u
        b_bar = soft_threshold(s, alpha)
        u_bar = s - b_bar
        return e, b_bar, u_bar


def _relax(old, bar, gamma):
    # (1 - gamma) * old + gamma * bar: algebraically old - gamma*(old - bar),
    # written so gamma = 1 returns bar without rounding.
    if gamma == 1.0:
        return bar
    return (1.0 - gamma) * old + gamma * bar


def code_step(state: CodingState, kernels: KernelBank, x: np.ndarray, cfg: SolverConfig) -> CodingState:
    """Relaxed coding iteration; the returned ``e`` is the fresh data-fit solve."""
    terms = _CodingTerms(kernels, x, cfg.lam)
    e, b_bar, u_bar = terms.predict(state.b, state.u, cfg.alpha)
    return CodingState(e, _relax(state.b, b_bar, cfg.gamma), _relax(state.u, u_bar, cfg.gamma))


def code_step_plain(state: CodingState, kernels: KernelBank, x: np.ndarray, cfg: SolverConfig) -> CodingState:
    """Plain (unrelaxed) coding iteration."""
    terms = _CodingTerms(kernels, x, cfg.lam)
    e, b_bar, u_bar = terms.predict(state.b, state.u, cfg.alpha)
    return CodingState(e, b_bar, u_bar)


def coding_residuals(prev_b, state: CodingState, lam: float) -> tuple[float, float]:
    """Max-norm primal (e - b) and dual (b step scaled by 1/lam) residuals."""
    primal = float(np.abs(state.e - state.b).max())
    dual = float(np.abs(state.b - prev_b).max()) / lam
    return primal, dual


def solve_coding(x: np.ndarray, kernels: KernelBank, cfg: SolverConfig) -> np.ndarray:
    """Code one block against a fixed bank and return the sparse map stack.

    Starts from a zero state, runs ``coding_iters`` relaxed steps (early
    stop on the residual tolerance when it is positive) and returns the
    split variable, which is exactly sparse by construction.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != kernels.padded_shape:
        raise ValueError(f"block shape {x.shape} does not match bank shape {kernels.padded_shape}")
    terms = _CodingTerms(kernels, x, cfg.lam)
    b = np.zeros((kernels.k,) + kernels.padded_shape)
    u = np.zeros_like(b)
    for _ in range(cfg.coding_iters):
        prev_b = b
        e, b_bar, u_bar = terms.predict(b, u, cfg.alpha)
        b = _relax(prev_b, b_bar, cfg.gamma)
        u = _relax(u, u_bar, cfg.gamma)
        if cfg.residual_tol > 0:
            primal, dual = coding_residuals(prev_b, CodingState(e, b, u), cfg.lam)
            if max(primal, dual) <= cfg.residual_tol:
                break
    return b


class _DictTerms:
    """Per-phase constants of the dictionary subproblem on the half-spectrum."""

    def __init__(self, maps, xs, lam: float):
        maps = np.asarray(maps, dtype=float)
        xs = np.asarray(xs, dtype=float)
        if maps.ndim != 4 or xs.ndim != 3 or maps.shape[0] != xs.shape[0]:
            raise ValueError("need matching (M, K, H, W) maps and (M, H, W) blocks")
        if maps.shape[0] < 1:
            raise ValueError("dictionary update needs at least one block")
        self.shape = xs.shape[1:]
        self.lam = lam
        self.e_hat = _rfft2(maps)
        x_hat = _rfft2(xs)
        self.rhs0 = lam * (np.conj(self.e_hat) * x_hat[:, None]).sum(axis=0)

    def predict(self, c, v, mask):
        rhs = self.rhs0 + _rfft2(c - v)
        d = _irfft2(apply_inv_lemma_dict(self.e_hat, rhs, self.lam), self.shape)
        c_bar = np.stack([project_kernel(d[k] + v[k], mask) for k in range(d.shape[0])])
        v_bar = v + d - c_bar
        return d, c_bar, v_bar


def dict_step(state: DictState, maps, xs, cfg: SolverConfig, support: tuple[int, int]) -> DictState:
    """Relaxed dictionary iteration over all blocks' maps at once."""
    terms = _DictTerms(maps, xs, cfg.lam)
    mask = support_mask(support, state.c.shape[1:])
    d, c_bar, v_bar = terms.predict(state.c, state.v, mask)
    return DictState(d, _relax(state.c, c_bar, cfg.gamma), _relax(state.v, v_bar, cfg.gamma))


def dict_step_plain(state: DictState, maps, xs, cfg: SolverConfig, support: tuple[int, int]) -> DictState:
    """Plain (unrelaxed) dictionary iteration."""
    terms = _DictTerms(maps, xs, cfg.lam)
    mask = support_mask(support, state.c.shape[1:])
    d, c_bar, v_bar = terms.predict(state.c, state.v, mask)
    return DictState(d, c_bar, v_bar)


def init_kernel_bank(k: int, support: tuple[int, int], padded_shape: tuple[int, int], seed: int) -> KernelBank:
    """Seeded random bank: unit-normalized Gaussian entries on each support."""
    rng = np.random.default_rng(seed)
    kernels = rng.standard_normal((k,) + tuple(support))
    norms = np.sqrt((kernels ** 2).sum(axis=(1, 2), keepdims=True))
    kernels = kernels / np.maximum(norms, 1e-300)
    return KernelBank(kernels, padded_shape)


def learn_kernels(source, k: int, kernel_size: tuple[int, int], cfg: SolverConfig) -> KernelBank:
    """Learn a kernel bank from unlabeled source blocks (alternating solver).

    Each outer iteration codes every block from a zero state
    (``coding_iters`` steps, vectorized across blocks) and then runs
    ``dict_iters`` dictionary steps on the coded maps.  Fully
    deterministic given ``cfg.seed``.
    """
    blocks = np.asarray(source.blocks, dtype=float)
    if blocks.ndim != 3 or blocks.shape[0] < 1:
        raise ValueError("source domain must contain at least one block")
    shape = blocks.shape[1:]
    k1, k2 = kernel_size
    if k1 > shape[0] or k2 > shape[1]:
        raise ValueError(f"kernel size {kernel_size} exceeds block shape {shape}")
    bank = init_kernel_bank(k, kernel_size, shape, cfg.seed)
    kernels = bank.kernels
    mask = support_mask(kernel_size, shape)

    for _ in range(cfg.outer_iters):
        current = KernelBank(kernels, shape)
        terms = _CodingTerms(current, blocks, cfg.lam)
        b = np.zeros((blocks.shape[0], k) + shape)
        u = np.zeros_like(b)
        for _ in range(cfg.coding_iters):
            prev_b = b
            e, b_bar, u_bar = terms.predict(b, u, cfg.alpha)
            b = _relax(prev_b, b_bar, cfg.gamma)
            u = _relax(u, u_bar, cfg.gamma)
            if cfg.residual_tol > 0:
                primal = float(np.abs(e - b).max())
                dual = float(np.abs(b - prev_b).max()) / cfg.lam
                if max(primal, dual) <= cfg.residual_tol:
                    break
        dict_terms = _DictTerms(b, blocks, cfg.lam)
        c = current.padded()
        v = np.zeros_like(c)
        for _ in range(cfg.dict_iters):
            d, c_bar, v_bar = dict_terms.predict(c, v, mask)
            c = _relax(c, c_bar, cfg.gamma)
            v = _relax(v, v_bar, cfg.gamma)
        kernels = c[:, :k1, :k2]
    return KernelBank(kernels, shape)


def save_kernel_bank(bank: KernelBank, path: str, seed: int | None = None, config: SolverConfig | None = None) -> None:
    """Write the float payload plus a JSON sidecar header (``path`` + .json)."""
    payload = np.ascontiguousarray(bank.kernels, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(payload.tobytes())
    header = {
        "k": bank.k,
        "k1": bank.support[0],
        "k2": bank.support[1],
        "h0": bank.padded_shape[0],
        "n": bank.padded_shape[1],
        "dtype": "float64",
        "seed": seed,
        "config": None if config is None else vars(config),
    }
    with open(path + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_kernel_bank(path: str) -> tuple[KernelBank, dict]:
    """Read a bank written by :func:`save_kernel_bank`; bit-exact payload."""
    with open(path + ".json") as fh:
        header = json.load(fh)
    with open(path, "rb") as fh:
        raw = fh.read()
    kernels = np.frombuffer(raw, dtype=np.float64).reshape(header["k"], header["k1"], header["k2"])
    bank = KernelBank(kernels.copy(), (header["h0"], header["n"]))
    return bank, header


def config_from_header(header: dict) -> SolverConfig | None:
    if header.get("config") is None:
        return None
    return SolverConfig(**header["config"])


def replace_seed(cfg: SolverConfig, seed: int) -> SolverConfig:
    return replace(cfg, seed=seed)
