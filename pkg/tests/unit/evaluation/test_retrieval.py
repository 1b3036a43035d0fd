"""
検索評価（Recall@K, NMI）の単体テスト
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.domain.eval_report import EmbeddingIndex
from src.evaluation.retrieval import evaluate, extract_embeddings, nmi, recall_at_k
from src.utils.exceptions import RetrievalUsageError


def _random_index(seed, rows=20, dim=4, classes=3):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(rows, dim))
    return EmbeddingIndex(values / np.linalg.norm(values, axis=1, keepdims=True), rng.integers(0, classes, rows))


def _neighbor_orders(index):
    """各行について (距離, 行番号) で並べた他の行の一覧"""
    orders = []
    for i in range(len(index)):
        distances = np.sum((index.embeddings - index.embeddings[i]) ** 2, axis=1)
        orders.append([j for _, j in sorted((float(distances[j]), j) for j in range(len(index)) if j != i)])
    return orders


def _recall_oracle(index, k, orders=None):
    """全ペアの距離を並べ替えて数える"""
    orders = orders if orders is not None else _neighbor_orders(index)
    hits = sum(1 for i, order in enumerate(orders) if any(index.labels[j] == index.labels[i] for j in order[:k]))
    return hits / len(index)


def _nmi_oracle(predicted, truth):
    """分割表から直接計算"""
    n = len(predicted)
    p_blocks = sorted(set(predicted))
    t_blocks = sorted(set(truth))
    joint = {(p, t): sum(1 for a, b in zip(predicted, truth) if a == p and b == t) / n
             for p in p_blocks for t in t_blocks}
    p_marg = {p: sum(joint[p, t] for t in t_blocks) for p in p_blocks}
    t_marg = {t: sum(joint[p, t] for p in p_blocks) for t in t_blocks}
    mutual = sum(v * math.log(v / (p_marg[p] * t_marg[t])) for (p, t), v in joint.items() if v > 0)
    h_p = -sum(v * math.log(v) for v in p_marg.values())
    h_t = -sum(v * math.log(v) for v in t_marg.values())
    return mutual / math.sqrt(h_p * h_t)


class TestRecallAtK:
    """recall_at_kのテスト"""

    def test_two_items(self):
        embeddings = np.eye(2)
        assert recall_at_k(EmbeddingIndex(embeddings, [0, 0]), 1) == 1.0
        assert recall_at_k(EmbeddingIndex(embeddings, [0, 1]), 1) == 0.0

    def test_self_is_excluded(self):
        """自分自身は近傍に含まれない"""
        index = EmbeddingIndex(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [0, 1, 0])
        # 0 の最近傍は 1（別クラス）、2 の最近傍は 0（同一ラベル）
        assert recall_at_k(index, 1) == pytest.approx(1.0 / 3.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force(self, seed):
        """最大200行のランダムなインデックスで総当たりと完全一致"""
        rng = np.random.default_rng(seed)
        index = _random_index(seed, rows=int(rng.integers(10, 201)), dim=int(rng.integers(2, 9)),
                              classes=int(rng.integers(2, 11)))
        orders = _neighbor_orders(index)
        for k in (1, 2, 4, 8):
            assert recall_at_k(index, k) == _recall_oracle(index, k, orders)

    def test_monotone_in_k(self):
        index = _random_index(10, rows=40, classes=6)
        values = [recall_at_k(index, k) for k in (1, 2, 4, 8, 16)]
        assert values == sorted(values)

    @pytest.mark.parametrize("k", [0, 20, 21])
    def test_invalid_k(self, k):
        with pytest.raises(RetrievalUsageError):
            recall_at_k(_random_index(0), k)


class TestNmi:
    """nmiのテスト"""

    def test_identical_partitions(self):
        assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0)

    def test_label_permutation(self):
        assert nmi([2, 2, 0, 0, 1], [0, 0, 1, 1, 2]) == pytest.approx(1.0)

    def test_six_point_oracle(self):
        """予測 {1,2,3}{4,5,6}、正解 {1,2,4}{3,5,6}"""
        predicted = [0, 0, 0, 1, 1, 1]
        truth = [0, 0, 1, 0, 1, 1]
        expected = ((2 / 3) * math.log(4 / 3) + (1 / 3) * math.log(2 / 3)) / math.log(2)
        assert nmi(predicted, truth) == pytest.approx(expected, abs=1e-12)
        assert nmi(predicted, truth) == pytest.approx(_nmi_oracle(predicted, truth), abs=1e-12)

    def test_single_block_conventions(self):
        assert nmi([0, 0, 0], [5, 5, 5]) == 1.0
        assert nmi([0, 0, 0], [0, 1, 2]) == 0.0
        assert nmi([0, 1, 2], [3, 3, 3]) == 0.0

    def test_invalid_input(self):
        with pytest.raises(RetrievalUsageError):
            nmi([0, 1], [0, 1, 2])
        with pytest.raises(RetrievalUsageError):
            nmi([], [])

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force(self, seed):
        """最大200点のランダムな分割で分割表からの直接計算と一致"""
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 201))
        predicted = rng.integers(0, int(rng.integers(2, 9)), n).tolist()
        truth = rng.integers(0, int(rng.integers(2, 11)), n).tolist()
        value = nmi(predicted, truth)
        if len(set(predicted)) > 1 and len(set(truth)) > 1:
            assert value == pytest.approx(min(_nmi_oracle(predicted, truth), 1.0), abs=1e-12)
        else:
            assert value in (0.0, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(pairs=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=30))
    def test_range_symmetry_and_oracle(self, pairs):
        predicted = [p for p, _ in pairs]
        truth = [t for _, t in pairs]
        value = nmi(predicted, truth)

        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(nmi(truth, predicted), abs=1e-12)
        if len(set(predicted)) > 1 and len(set(truth)) > 1:
            assert value == pytest.approx(min(_nmi_oracle(predicted, truth), 1.0), abs=1e-9)


class TestEvaluate:
    """evaluate / extract_embeddings のテスト"""

    def test_extract_embeddings(self, small_model, small_test_set):
        index = extract_embeddings(small_model, small_test_set)
        assert len(index) == 24
        assert index.dim == 8
        assert index.max_norm_deviation() <= 1e-6
        np.testing.assert_array_equal(index.labels, small_test_set.labels)

    def test_report_matches_direct_computation(self, small_model, small_test_set):
        report = evaluate(small_model, small_test_set, ks=(1, 2, 4))
        index = extract_embeddings(small_model, small_test_set)

        assert report.num_queries == 24
        assert sorted(report.recall_at) == [1, 2, 4]
        for k, value in report.recall_at.items():
            assert value == recall_at_k(index, k)
        assert 0.0 <= report.nmi <= 1.0
        assert 1 <= report.extras['predicted_clusters'] <= 4

    def test_deterministic(self, small_model, small_test_set):
        first = evaluate(small_model, small_test_set, ks=(1, 2))
        second = evaluate(small_model, small_test_set, ks=(1, 2))
        assert first.to_json() == second.to_json()
