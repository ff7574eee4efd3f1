"""Primitive operators for circular convolutional sparse coding.

All solvers in this package work on 2-D blocks with periodic boundary
conditions, so every convolution diagonalizes in the Fourier domain and
the per-frequency linear systems can be solved with low-rank inversion
identities instead of dense factorizations.

Conventions fixed project-wide:

* transforms are the mutually inverse ``np.fft.fft2`` / ``np.fft.ifft2``
  pair (default normalization), asserted by a round-trip test;
* kernels are zero-padded to the block shape anchored at the top-left
  corner, and their support mask marks exactly that anchor region;
* a feature-map stack is an ``(K, H, W)`` array, one map per kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def pad_kernel(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Zero-pad a small kernel to ``shape``, anchored at the top-left corner."""
    kernel = np.asarray(kernel, dtype=float)
    k1, k2 = kernel.shape
    h, w = shape
    if k1 > h or k2 > w:
        raise ValueError(f"kernel {kernel.shape} does not fit inside {shape}")
    out = np.zeros(shape, dtype=float)
    out[:k1, :k2] = kernel
    return out


def support_mask(support: tuple[int, int], shape: tuple[int, int]) -> np.ndarray:
    """Binary mask with ones on the top-left ``support`` anchor region."""
    k1, k2 = support
    h, w = shape
    if not (1 <= k1 <= h and 1 <= k2 <= w):
        raise ValueError(f"support {support} does not fit inside {shape}")
    mask = np.zeros(shape, dtype=float)
    mask[:k1, :k2] = 1.0
    return mask


@dataclass
class KernelBank:
    """A bank of K convolution kernels under the unit 2-norm ball constraint.

    Parameters
    ----------
    kernels : ndarray, shape (K, k1, k2)
        Kernel coefficients on their spatial support.
    padded_shape : (int, int)
        Block shape (H, W) the kernels operate on.  Spectra are computed
        after zero-padding each kernel to this shape.
    """

    kernels: np.ndarray
    padded_shape: tuple[int, int]
    _spectra: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=float)
        if self.kernels.ndim != 3 or self.kernels.shape[0] < 1:
            raise ValueError("kernels must be a (K, k1, k2) array with K >= 1")
        self.padded_shape = (int(self.padded_shape[0]), int(self.padded_shape[1]))
        k1, k2 = self.kernels.shape[1:]
        h, w = self.padded_shape
        if k1 > h or k2 > w:
            raise ValueError(f"kernel support {(k1, k2)} exceeds padded shape {(h, w)}")
        if not np.all(np.isfinite(self.kernels)):
            raise ValueError("kernels contain non-finite entries")
        norms = np.sqrt((self.kernels ** 2).sum(axis=(1, 2)))
        if np.any(norms > 1.0 + 1e-9):
            raise ValueError(f"kernel norms exceed the unit ball: max {norms.max():.12g}")

    @property
    def k(self) -> int:
        return self.kernels.shape[0]

    @property
    def support(self) -> tuple[int, int]:
        return self.kernels.shape[1], self.kernels.shape[2]

    def padded(self) -> np.ndarray:
        """Kernels zero-padded to the block shape, (K, H, W)."""
        return np.stack([pad_kernel(k, self.padded_shape) for k in self.kernels])

    def spectra(self) -> np.ndarray:
        """Forward transforms of the padded kernels, cached, (K, H, W) complex."""
        if self._spectra is None:
            self._spectra = np.fft.fft2(self.padded(), axes=(-2, -1))
        return self._spectra

    def mask(self) -> np.ndarray:
        return support_mask(self.support, self.padded_shape)


def conv2_circular(kernel: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Circular 2-D convolution of a zero-padded kernel with an image.

    Periodic boundary handling makes this the exact spatial counterpart
    of an elementwise product of spectra.
    """
    image = np.asarray(image, dtype=float)
    k_hat = np.fft.fft2(pad_kernel(kernel, image.shape))
    return np.fft.ifft2(k_hat * np.fft.fft2(image)).real


def soft_threshold(x: np.ndarray, alpha: float) -> np.ndarray:
    """Elementwise shrinkage: x-a above a, 0 inside the dead zone, x+a below -a."""
    if alpha < 0:
        raise ValueError(f"threshold must be nonnegative, got {alpha}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - alpha, 0.0)


def project_kernel(z: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mask to the kernel support, then radially project onto the unit ball.

    The output is zero outside the support and has 2-norm <= 1; repeated
    application is an exact no-op.
    """
    m = np.asarray(z, dtype=float) * mask
    n = np.linalg.norm(m)
    # one extra pass absorbs ulp-level overshoot so the result is a fixed point
    for _ in range(3):
        if n <= 1.0:
            break
        m = m / n
        n = np.linalg.norm(m)
    return m


def _as_batch(x, ndim):
    x = np.asarray(x, dtype=float)
    if x.ndim == ndim:
        x = x[None]
    elif x.ndim != ndim + 1:
        raise ValueError(f"expected {ndim}- or {ndim + 1}-dimensional input, got {x.ndim}-dimensional")
    return x


def csc_objective(xs, kernels: KernelBank, maps, eta: float) -> float:
    """Reconstruction-plus-sparsity objective of a coding.

    0.5 * sum_m ||x_m - sum_k d_k * e_mk||_2^2 + eta * sum_mk ||e_mk||_1,
    with ``*`` the circular convolution above.  ``xs`` is one block
    (H, W) or a stack (M, H, W); ``maps`` matches with one extra leading
    kernel axis.
    """
    if eta < 0:
        raise ValueError(f"sparsity weight must be nonnegative, got {eta}")
    xs = _as_batch(xs, 2)
    maps = _as_batch(np.asarray(maps, dtype=float), 3)
    m, h, w = xs.shape
    if maps.shape != (m, kernels.k, h, w):
        raise ValueError(f"maps shape {maps.shape} inconsistent with blocks {xs.shape} and K={kernels.k}")
    total = 0.0
    for i in range(m):
        recon = np.zeros((h, w))
        for k in range(kernels.k):
            recon += conv2_circular(kernels.kernels[k], maps[i, k])
        total += 0.5 * float(((xs[i] - recon) ** 2).sum())
    total += eta * float(np.abs(maps).sum())
    return total


def apply_inv_lemma_coding(d_hat: np.ndarray, rhs: np.ndarray, lam: float, den: np.ndarray | None = None) -> np.ndarray:
    """Solve (I_K + lam * v v^H) y = r per frequency by the rank-one identity.

    ``d_hat`` is the (K, H, W) stack of rank-one factors (the conjugated
    kernel spectra in the coding subproblem) and ``rhs`` is a matching
    (..., K, H, W) stack; returns r - lam * v (v^H r) / (1 + lam * ||v||^2).
    ``den`` may carry the precomputed 1 + lam * ||v||^2 term, which is
    constant while the kernels are fixed.
    """
    d_hat = np.asarray(d_hat)
    rhs = np.asarray(rhs)
    num = (np.conj(d_hat) * rhs).sum(axis=-3)
    if den is None:
        den = 1.0 + lam * (np.abs(d_hat) ** 2).sum(axis=-3)
    return rhs - lam * d_hat * (num / den)[..., None, :, :]


def apply_inv_lemma_dict(e_hat: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Solve (I_K + lam * E^H E) y = r per frequency, E the (M, K) spectra matrix.

    Uses the inversion lemma through an M x M system when M < K, a direct
    K x K solve otherwise; both routes produce the same solution.
    """
    e_hat = np.asarray(e_hat)
    rhs = np.asarray(rhs)
    if e_hat.ndim != 4:
        raise ValueError("map spectra must be a (M, K, H, W) array")
    m, k, h, w = e_hat.shape
    if rhs.shape != (k, h, w):
        raise ValueError(f"rhs shape {rhs.shape} does not match spectra {(k, h, w)}")
    if lam == 0.0:
        return rhs.copy()
    if m < k:
        t = np.einsum("mkhw,khw->hwm", e_hat, rhs)
        gram = np.einsum("mkhw,nkhw->hwmn", e_hat, np.conj(e_hat))
        sys = lam * gram
        idx = np.arange(m)
        sys[..., idx, idx] += 1.0
        s = np.linalg.solve(sys, t[..., None])[..., 0]
        return rhs - lam * np.einsum("mkhw,hwm->khw", np.conj(e_hat), s)
    gram = np.einsum("mkhw,mlhw->hwkl", np.conj(e_hat), e_hat)
    sys = lam * gram
    idx = np.arange(k)
    sys[..., idx, idx] += 1.0
    rhs_t = np.moveaxis(rhs, 0, -1)
    y = np.linalg.solve(sys, rhs_t[..., None])[..., 0]
    return np.moveaxis(y, -1, 0)
