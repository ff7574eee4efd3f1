import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csctl.ops import (
    KernelBank,
    apply_inv_lemma_coding,
    apply_inv_lemma_dict,
    conv2_circular,
    csc_objective,
    pad_kernel,
    project_kernel,
    soft_threshold,
    support_mask,
)
from oracles import conv2_circular_loops, dense_gram_solve, dense_rank_one_solve

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def random_bank(rng, k=2, support=(3, 3), shape=(6, 7)):
    kernels = rng.standard_normal((k,) + support)
    kernels /= np.sqrt((kernels ** 2).sum(axis=(1, 2), keepdims=True))
    return KernelBank(kernels, shape)


class TestConv2Circular:
    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(0)
        image = rng.standard_normal((5, 6))
        delta = np.zeros((2, 2))
        delta[0, 0] = 1.0
        assert np.allclose(conv2_circular(delta, image), image, atol=1e-12)

    def test_ones_kernel_on_constant_map(self):
        image = np.full((4, 5), 3.0)
        out = conv2_circular(np.ones((2, 2)), image)
        assert np.allclose(out, 12.0, atol=1e-12)

    def test_matches_quadruple_loop(self):
        rng = np.random.default_rng(1)
        kernel = rng.standard_normal((3, 3))
        image = rng.standard_normal((8, 8))
        assert np.abs(conv2_circular(kernel, image) - conv2_circular_loops(kernel, image)).max() <= 1e-10

    def test_kernel_larger_than_image_rejected(self):
        with pytest.raises(ValueError):
            conv2_circular(np.ones((4, 4)), np.ones((3, 5)))

    @settings(max_examples=50, deadline=None)
    @given(
        a=arrays(float, (3, 3), elements=finite),
        b=arrays(float, (3, 3), elements=finite),
        image=arrays(float, (6, 6), elements=finite),
        s1=st.floats(-3, 3, allow_nan=False),
    )
    def test_linear_in_kernel(self, a, b, image, s1):
        lhs = conv2_circular(a + s1 * b, image)
        rhs = conv2_circular(a, image) + s1 * conv2_circular(b, image)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())

    @settings(max_examples=50, deadline=None)
    @given(
        kernel=arrays(float, (2, 3), elements=finite),
        image=arrays(float, (5, 6), elements=finite),
        dr=st.integers(0, 4),
        dc=st.integers(0, 5),
    )
    def test_shift_equivariance(self, kernel, image, dr, dc):
        shifted = np.roll(np.roll(image, dr, axis=0), dc, axis=1)
        lhs = conv2_circular(kernel, shifted)
        rhs = np.roll(np.roll(conv2_circular(kernel, image), dr, axis=0), dc, axis=1)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())

    def test_spectra_conjugate_symmetric_and_imag_residue(self):
        rng = np.random.default_rng(2)
        image = rng.standard_normal((6, 8))
        spec = np.fft.fft2(image)
        flipped = np.conj(spec[(-np.arange(6)) % 6][:, (-np.arange(8)) % 8])
        assert np.abs(spec - flipped).max() <= 1e-9
        kernel = rng.standard_normal((3, 3))
        prod = np.fft.fft2(pad_kernel(kernel, image.shape)) * spec
        assert np.abs(np.fft.ifft2(prod).imag).max() < 1e-10

    def test_transform_round_trip(self):
        rng = np.random.default_rng(3)
        image = rng.standard_normal((7, 9))
        assert np.abs(np.fft.ifft2(np.fft.fft2(image)).real - image).max() <= 1e-12


class TestSoftThreshold:
    def test_above_threshold(self):
        assert soft_threshold(np.array(1.0), 0.3) == pytest.approx(0.7, abs=1e-15)

    def test_dead_zone(self):
        assert soft_threshold(np.array(0.2), 0.3) == 0.0

    def test_below_negative_threshold(self):
        assert soft_threshold(np.array(-0.5), 0.3) == pytest.approx(-0.2, abs=1e-15)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.zeros(3), -0.1)

    @settings(max_examples=100, deadline=None)
    @given(a=finite, b=finite, alpha=st.floats(0, 5, allow_nan=False))
    def test_nonexpansive(self, a, b, alpha):
        sa = soft_threshold(np.array(a), alpha)
        sb = soft_threshold(np.array(b), alpha)
        assert abs(sa - sb) <= abs(a - b) + 1e-15

    @settings(max_examples=100, deadline=None)
    @given(x=arrays(float, (4,), elements=finite), alpha=st.floats(0, 5, allow_nan=False))
    def test_odd(self, x, alpha):
        assert np.array_equal(soft_threshold(-x, alpha), -soft_threshold(x, alpha))


class TestProjectKernel:
    def setup_method(self):
        self.mask = support_mask((2, 2), (4, 4))

    def test_zero_outside_support(self):
        z = np.ones((4, 4))
        out = project_kernel(z, self.mask)
        assert np.all(out[2:, :] == 0) and np.all(out[:, 2:] == 0)

    def test_radial_projection_norm_one(self):
        z = np.zeros((4, 4))
        z[:2, :2] = 1.0  # norm 2 on the support
        out = project_kernel(z, self.mask)
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(out[:2, :2], 0.5, atol=1e-12)

    def test_inside_ball_unchanged(self):
        z = np.zeros((4, 4))
        z[0, 0] = 0.5
        assert np.array_equal(project_kernel(z, self.mask), z)

    @settings(max_examples=100, deadline=None)
    @given(z=arrays(float, (4, 4), elements=finite))
    def test_idempotent_exactly(self, z):
        mask = support_mask((2, 3), (4, 4))
        once = project_kernel(z, mask)
        twice = project_kernel(once, mask)
        assert np.array_equal(once, twice)


class TestCscObjective:
    def test_zero_maps_leaves_reconstruction_term(self):
        rng = np.random.default_rng(4)
        bank = random_bank(rng)
        xs = rng.standard_normal((3, 6, 7))
        maps = np.zeros((3, bank.k, 6, 7))
        expected = 0.5 * (xs ** 2).sum()
        assert csc_objective(xs, bank, maps, 0.1) == pytest.approx(expected, rel=1e-12)

    def test_exact_reconstruction_leaves_sparsity_term(self):
        rng = np.random.default_rng(5)
        bank = random_bank(rng, k=2)
        maps = rng.standard_normal((2, 6, 7))
        x = sum(conv2_circular(bank.kernels[k], maps[k]) for k in range(2))
        eta = 0.37
        assert csc_objective(x, bank, maps, eta) == pytest.approx(eta * np.abs(maps).sum(), rel=1e-10)

    def test_matches_bruteforce_sum(self):
        rng = np.random.default_rng(6)
        bank = random_bank(rng, k=2, support=(3, 3), shape=(5, 6))
        xs = rng.standard_normal((2, 5, 6))
        maps = rng.standard_normal((2, 2, 5, 6))
        eta = 0.21
        brute = 0.0
        for m in range(2):
            recon = np.zeros((5, 6))
            for k in range(2):
                recon += conv2_circular_loops(bank.kernels[k], maps[m, k])
            brute += 0.5 * ((xs[m] - recon) ** 2).sum()
        brute += eta * np.abs(maps).sum()
        assert abs(csc_objective(xs, bank, maps, eta) - brute) <= 1e-10 * max(1.0, brute)

    def test_nonnegative_and_zero_only_when_both_terms_vanish(self):
        rng = np.random.default_rng(7)
        bank = random_bank(rng)
        xs = rng.standard_normal((2, 6, 7))
        maps = rng.standard_normal((2, bank.k, 6, 7))
        assert csc_objective(xs, bank, maps, 0.3) > 0
        zero = csc_objective(np.zeros((1, 6, 7)), bank, np.zeros((1, bank.k, 6, 7)), 0.3)
        assert zero == 0.0

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(8)
        bank = random_bank(rng)
        with pytest.raises(ValueError):
            csc_objective(rng.standard_normal((2, 6, 7)), bank, rng.standard_normal((2, 3, 6, 7)), 0.1)


class TestInvLemmaCoding:
    def test_lambda_zero_returns_rhs(self):
        rng = np.random.default_rng(9)
        d = rng.standard_normal((3, 4, 4)) + 1j * rng.standard_normal((3, 4, 4))
        rhs = rng.standard_normal((3, 4, 4)) + 1j * rng.standard_normal((3, 4, 4))
        assert np.allclose(apply_inv_lemma_coding(d, rhs, 0.0), rhs, atol=1e-15)

    def test_scalar_case(self):
        d = np.ones((1, 1, 1), dtype=complex)
        rhs = np.ones((1, 1, 1), dtype=complex)
        assert apply_inv_lemma_coding(d, rhs, 1.0)[0, 0, 0] == pytest.approx(0.5)

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(10)
        d = rng.standard_normal((3, 8, 8)) + 1j * rng.standard_normal((3, 8, 8))
        rhs = rng.standard_normal((3, 8, 8)) + 1j * rng.standard_normal((3, 8, 8))
        out = apply_inv_lemma_coding(d, rhs, 0.9)
        assert np.abs(out - dense_rank_one_solve(d, rhs, 0.9)).max() <= 1e-8


class TestInvLemmaDict:
    def test_lambda_zero_returns_rhs(self):
        rng = np.random.default_rng(11)
        e = rng.standard_normal((2, 3, 4, 4)) + 1j * rng.standard_normal((2, 3, 4, 4))
        rhs = rng.standard_normal((3, 4, 4)) + 1j * rng.standard_normal((3, 4, 4))
        assert np.allclose(apply_inv_lemma_dict(e, rhs, 0.0), rhs, atol=1e-15)

    def test_single_block_reduces_to_rank_one_form(self):
        rng = np.random.default_rng(12)
        v = rng.standard_normal((3, 5, 5)) + 1j * rng.standard_normal((3, 5, 5))
        rhs = rng.standard_normal((3, 5, 5)) + 1j * rng.standard_normal((3, 5, 5))
        lhs = apply_inv_lemma_dict(np.conj(v)[None], rhs, 0.7)
        assert np.abs(lhs - apply_inv_lemma_coding(v, rhs, 0.7)).max() <= 1e-12

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(13)
        e = rng.standard_normal((2, 4, 8, 8)) + 1j * rng.standard_normal((2, 4, 8, 8))
        rhs = rng.standard_normal((4, 8, 8)) + 1j * rng.standard_normal((4, 8, 8))
        out = apply_inv_lemma_dict(e, rhs, 1.3)
        assert np.abs(out - dense_gram_solve(e, rhs, 1.3)).max() <= 1e-8

    def test_both_branch_paths_agree(self):
        rng = np.random.default_rng(14)
        e = rng.standard_normal((2, 4, 6, 6)) + 1j * rng.standard_normal((2, 4, 6, 6))
        rhs = rng.standard_normal((4, 6, 6)) + 1j * rng.standard_normal((4, 6, 6))
        woodbury = apply_inv_lemma_dict(e, rhs, 0.8)  # M < K
        stacked = np.concatenate([e, e, e], axis=0)  # M >= K, same gram * 3
        direct = apply_inv_lemma_dict(stacked, rhs, 0.8 / 3.0)
        assert np.abs(woodbury - direct).max() <= 1e-8


class TestKernelBank:
    def test_norm_invariant_enforced(self):
        with pytest.raises(ValueError):
            KernelBank(np.full((1, 2, 2), 1.0), (4, 4))

    def test_support_must_fit(self):
        with pytest.raises(ValueError):
            KernelBank(np.zeros((1, 5, 2)), (4, 4))

    def test_spectra_shape_and_cache(self):
        rng = np.random.default_rng(15)
        bank = random_bank(rng, k=2, shape=(5, 8))
        spec = bank.spectra()
        assert spec.shape == (2, 5, 8)
        assert bank.spectra() is spec
