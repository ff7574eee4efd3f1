import numpy as np
import pytest

from csctl.ops import KernelBank
from csctl.pipeline import FeatureTable, encode_target, normalize_table, reshape_expand, select_feature_map
from csctl.relief import ReliefParams, relief_weights, select_top_q, ss_ck
from csctl.solver import SolverConfig, learn_kernels
from csctl.svm import loso_cv
from csctl.synth import make_planted_source, make_planted_target
from oracles import relief_weights_bruteforce


def make_table(rows, labels=None):
    rows = np.asarray(rows, dtype=float)
    m = rows.shape[0]
    labels = np.zeros(m, dtype=int) if labels is None else np.asarray(labels)
    return FeatureTable(rows, labels, [f"s{i}" for i in range(m)])


class TestReliefWeights:
    def test_constant_feature_weighs_exactly_zero(self):
        rng = np.random.default_rng(0)
        rows = rng.standard_normal((12, 5))
        rows[:, 2] = 4.2
        labels = np.array([0, 1] * 6)
        w = relief_weights(rows, labels, 2)
        assert w.weights[2] == 0.0

    def test_hand_computed_four_row_toy(self):
        rows = np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 1.0], [0.9, 1.0]])
        labels = np.array([0, 0, 1, 1])
        w = relief_weights(rows, labels, 1)
        assert np.allclose(w.weights, [2.86, 4.0], atol=1e-9)
        assert np.array_equal(w.order, [1, 0])

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            m = int(rng.integers(8, 24))
            n0 = int(rng.integers(2, 12))
            rows = rng.standard_normal((m, n0))
            labels = (rng.random(m) < 0.5).astype(int)
            r = int(rng.integers(1, 4))
            if min((labels == 0).sum(), (labels == 1).sum()) < r + 1:
                continue
            w = relief_weights(rows, labels, r)
            assert np.abs(w.weights - relief_weights_bruteforce(rows, labels, r)).max() <= 1e-10

    def test_duplicated_rows_match_oracle_and_keep_signs(self):
        rows = np.array([[0.0, 0.0, 0.5], [0.1, 0.0, 0.7], [1.0, 1.0, 0.6], [0.9, 1.0, 0.4]])
        labels = np.array([0, 0, 1, 1])
        w1 = relief_weights(rows, labels, 1)
        dup_rows = np.repeat(rows, 2, axis=0)
        dup_labels = np.repeat(labels, 2)
        w2 = relief_weights(dup_rows, dup_labels, 2)
        assert np.abs(w2.weights - relief_weights_bruteforce(dup_rows, dup_labels, 2)).max() <= 1e-10
        strong = np.abs(w1.weights) > 1e-9
        assert np.array_equal(np.sign(w1.weights[strong]), np.sign(w2.weights[strong]))

    def test_row_order_invariance(self):
        rng = np.random.default_rng(2)
        rows = rng.standard_normal((14, 6))
        labels = np.array([0, 1] * 7)
        w = relief_weights(rows, labels, 2)
        perm = rng.permutation(14)
        w_perm = relief_weights(rows[perm], labels[perm], 2)
        assert np.allclose(w.weights, w_perm.weights, atol=1e-10)

    def test_small_class_rejected(self):
        rows = np.zeros((4, 2))
        labels = np.array([0, 0, 0, 1])
        with pytest.raises(ValueError):
            relief_weights(rows, labels, 1)

    def test_perfect_separator_gets_max_weight(self):
        rng = np.random.default_rng(3)
        hits = 0
        for _ in range(100):
            m = 20
            labels = np.array([0, 1] * (m // 2))
            rows = rng.random((m, 8))
            rows[:, 0] = np.where(labels == 1, 0.8, 0.2) + 0.05 * rng.standard_normal(m)
            w = relief_weights(rows, labels, 3)
            brute = relief_weights_bruteforce(rows, labels, 3)
            assert np.abs(w.weights - brute).max() <= 1e-10
            if int(np.argmax(w.weights)) == 0:
                hits += 1
        assert hits >= 95


class TestSelectTopQ:
    def test_full_q_is_column_permutation(self):
        rng = np.random.default_rng(4)
        rows = rng.standard_normal((6, 5))
        table = make_table(rows)
        w = relief_weights(rows, np.array([0, 1] * 3), 2)
        sel = select_top_q(table, w, 5)
        assert sorted(sel.column_index.tolist()) == [0, 1, 2, 3, 4]
        assert np.array_equal(sel.rows, rows[:, sel.column_index])

    def test_q_one_is_argmax_column(self):
        rng = np.random.default_rng(5)
        rows = rng.standard_normal((8, 4))
        labels = np.array([0, 1] * 4)
        w = relief_weights(rows, labels, 2)
        sel = select_top_q(make_table(rows), w, 1)
        assert sel.column_index[0] == int(np.argmax(w.weights))

    def test_ties_break_by_ascending_column(self):
        from csctl.relief import WeightVector

        weights = np.array([0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0])
        order = np.argsort(-weights, kind="stable")
        w = WeightVector(weights, order)
        sel = select_top_q(make_table(np.zeros((2, 8))), w, 2)
        assert sel.column_index.tolist() == [3, 7]

    def test_nesting_property(self):
        rng = np.random.default_rng(6)
        rows = rng.standard_normal((10, 9))
        labels = np.array([0, 1] * 5)
        w = relief_weights(rows, labels, 2)
        table = make_table(rows)
        cols = [select_top_q(table, w, q).column_index.tolist() for q in range(1, 10)]
        for q1 in range(len(cols) - 1):
            assert cols[q1] == cols[q1 + 1][: q1 + 1]

    def test_q_out_of_range(self):
        rng = np.random.default_rng(7)
        rows = rng.standard_normal((4, 3))
        w = relief_weights(rows, np.array([0, 0, 1, 1]), 1)
        with pytest.raises(ValueError):
            select_top_q(make_table(rows), w, 4)
        with pytest.raises(ValueError):
            select_top_q(make_table(rows), w, 0)


class TestSsCk:
    def setup_method(self):
        self.target = make_planted_target(n_subjects=10, h0=8, n=10, seed=2)
        src = make_planted_source(n_blocks=8, h0=8, n=10, seed=3)
        cfg = SolverConfig(outer_iters=10, coding_iters=10, dict_iters=5, alpha=0.1, seed=0)
        self.bank = learn_kernels(src, 2, (3, 3), cfg)
        self.cfg = cfg
        self.params = ReliefParams(2, 20)

    def test_metrics_in_range_and_identity(self):
        metrics = ss_ck(self.bank, self.target, 1, self.params, self.cfg)
        assert 0.0 <= metrics.accuracy <= 1.0
        assert metrics.accuracy == (metrics.tp + metrics.tn) / metrics.total

    def test_equals_manual_stage_composition(self):
        metrics = ss_ck(self.bank, self.target, 1, self.params, self.cfg, c_param=1.0)
        stacks = encode_target(self.target, self.bank, self.cfg)
        rows = reshape_expand([select_feature_map(s, 1) for s in stacks])
        labels = self.target.labels
        ids = self.target.subject_ids

        def fold_features(train_mask):
            table = FeatureTable(rows, labels, ids, train_mask)
            norm = normalize_table(table, mode="train-stats")
            w = relief_weights(norm.rows[train_mask], labels[train_mask], self.params.r_neighbors)
            return select_top_q(norm, w, self.params.q_features).rows

        manual = loso_cv(rows, labels, ids, 1.0, fold_features)
        assert (metrics.tp, metrics.fn, metrics.tn, metrics.fp) == (manual.tp, manual.fn, manual.tn, manual.fp)
        for a, b in zip(metrics.per_fold, manual.per_fold):
            assert a.subject_id == b.subject_id and a.pred == b.pred

    def test_planted_high_snr_accuracy(self):
        target = make_planted_target(n_subjects=12, h0=13, n=26, seed=4, noise_sigma=0.01)
        src = make_planted_source(n_blocks=12, h0=13, n=26, seed=5)
        cfg = SolverConfig(outer_iters=20, coding_iters=10, dict_iters=10, alpha=0.15, seed=0)
        bank = learn_kernels(src, 2, (4, 4), cfg)
        metrics = ss_ck(bank, target, 1, ReliefParams(3, 80), cfg)
        assert metrics.accuracy >= 0.9

    def test_global_relief_scope_runs(self):
        metrics = ss_ck(self.bank, self.target, 1, self.params, self.cfg, relief_scope="global")
        assert metrics.total == self.target.m

    def test_bad_modes_rejected(self):
        with pytest.raises(ValueError):
            ss_ck(self.bank, self.target, 1, self.params, self.cfg, map_select="best")
        with pytest.raises(ValueError):
            ss_ck(self.bank, self.target, 1, self.params, self.cfg, relief_scope="sometimes")

    def test_concat_map_select(self):
        metrics = ss_ck(self.bank, self.target, 2, ReliefParams(2, 40), self.cfg, map_select="concat")
        assert metrics.total == self.target.m
