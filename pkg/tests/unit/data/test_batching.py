"""
バッチ生成の単体テスト
"""

import numpy as np
import pytest

from src.data.batching import (
    batch_count, derive_seed, epoch_order, iter_batches, make_batches, prefetch_batches
)
from src.data.synthetic_dataset import generate_dataset
from src.domain.run_config import DatasetConfig
from src.utils.exceptions import ConfigurationError


@pytest.fixture(scope="module")
def dataset():
    """4クラス × 50枚（16x16）"""
    return generate_dataset(DatasetConfig(), seed=0)


def _pixels(batches):
    return [np.stack([s.pixels for s in batch.samples]) for batch in batches]


class TestMakeBatches:
    """make_batchesのテスト"""

    def test_batch_count_and_size(self, dataset):
        """200枚、b=32 → m=64 のバッチが6個"""
        batches = make_batches(dataset, batch_size=32, epoch_seed=0)
        assert batch_count(200, 32) == 6
        assert len(batches) == 6
        assert all(batch.m == 64 for batch in batches)

    def test_each_batch_has_b_augmented(self, dataset):
        for batch in make_batches(dataset, batch_size=16, epoch_seed=1):
            assert batch.augmented_count == 16

    def test_same_seed_identical_sequence(self, dataset):
        """同じエポックシードなら同じバッチ列"""
        first = _pixels(make_batches(dataset, 16, epoch_seed=5))
        second = _pixels(make_batches(dataset, 16, epoch_seed=5))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_different_seed_different_order(self, dataset):
        first = make_batches(dataset, 16, epoch_seed=0)[0]
        second = make_batches(dataset, 16, epoch_seed=1)[0]
        ids = lambda batch: [s.sample_id for s in batch.samples]
        assert ids(first) != ids(second)

    def test_no_duplicates_within_epoch(self, dataset):
        batches = make_batches(dataset, 16, epoch_seed=2)
        ids = [s.sample_id for batch in batches for s in batch.samples if not s.is_augmented]
        assert len(ids) == len(set(ids)) == 192

    def test_batch_larger_than_dataset(self, dataset):
        with pytest.raises(ConfigurationError) as exc_info:
            make_batches(dataset, batch_size=201, epoch_seed=0)
        assert exc_info.value.key == "training.batch_size"

    def test_augment_seed_changes_twins_only(self, dataset):
        """拡張シードを変えると拡張画像だけが変わる"""
        a = make_batches(dataset, 8, epoch_seed=0, augment_seed=0)[0]
        b = make_batches(dataset, 8, epoch_seed=0, augment_seed=1)[0]
        assert [s.sample_id for s in a.samples] == [s.sample_id for s in b.samples]
        np.testing.assert_array_equal(a.samples[0].pixels, b.samples[0].pixels)


class TestIterAndPrefetch:
    """iter_batches / prefetch_batches のテスト"""

    def test_start_batch_resumes_sequence(self, dataset):
        full = _pixels(iter_batches(dataset, 32, epoch_seed=3))
        tail = _pixels(iter_batches(dataset, 32, epoch_seed=3, start_batch=2))
        assert len(tail) == len(full) - 2
        for a, b in zip(full[2:], tail):
            np.testing.assert_array_equal(a, b)

    def test_prefetch_matches_sequential(self, dataset):
        """先読みでも配送されるバッチ列は同一"""
        sequential = _pixels(iter_batches(dataset, 16, epoch_seed=4, augment_seed=9))
        prefetched = _pixels(prefetch_batches(dataset, 16, epoch_seed=4, augment_seed=9, max_ahead=3))
        assert len(sequential) == len(prefetched)
        for a, b in zip(sequential, prefetched):
            np.testing.assert_array_equal(a, b)


class TestSeeds:
    """シード導出のテスト"""

    def test_derive_seed_deterministic(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(2, 1)
        assert 0 <= derive_seed(0, 0) < 2 ** 32

    def test_epoch_order_is_permutation(self):
        order = epoch_order(10, 7)
        assert sorted(order.tolist()) == list(range(10))
