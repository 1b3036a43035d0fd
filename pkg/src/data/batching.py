"""
バッチ生成

エポックごとのシード付きシャッフルで元画像を b 枚ずつ取り出し、
それぞれに新しく拡張した対を付けて m = 2b のバッチを作ります。
各バッチの拡張乱数は (augment_seed, epoch_seed, バッチ番号) から導くため、
先読みスレッドを使っても配送されるバッチ列は単一スレッドと同一です。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, List, Optional

import numpy as np

from src.data.augmentation import make_pair
from src.data.synthetic_dataset import SyntheticDataset
from src.domain.image_sample import Batch
from src.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def derive_seed(*parts: int) -> int:
    """複数の整数から決定的に32bitシードを導出"""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def batch_count(dataset_size: int, batch_size: int) -> int:
    """1エポックのバッチ数（端数は捨てる）"""
    return dataset_size // batch_size


def _check_batch_size(dataset: SyntheticDataset, batch_size: int) -> None:
    if batch_size < 1 or batch_size > len(dataset):
        raise ConfigurationError(
            f"バッチサイズ b={batch_size} はデータセットサイズ {len(dataset)} 以下の正の値である必要があります",
            key="training.batch_size"
        )


def epoch_order(dataset_size: int, epoch_seed: int) -> np.ndarray:
    """エポックのシャッフル順"""
    return np.random.default_rng(epoch_seed).permutation(dataset_size)


def build_batch(dataset: SyntheticDataset, indices: np.ndarray, epoch_seed: int, batch_index: int,
                crop_fraction: float, augment_seed: int) -> Batch:
    """
    指定インデックスの元画像から1バッチを作成

    Args:
        dataset: データセット
        indices: 元画像のインデックス（b個）
        epoch_seed: エポックシード
        batch_index: エポック内のバッチ番号
        crop_fraction: 切り出し比率
        augment_seed: 拡張シード

    Returns:
        交互配置のバッチ
    """
    rng = np.random.default_rng([augment_seed, epoch_seed, batch_index])
    pairs = [
        make_pair(dataset.sample(int(index)), rng, crop_fraction, pair_id=position)
        for position, index in enumerate(indices)
    ]
    return Batch.from_pairs(pairs)


def iter_batches(dataset: SyntheticDataset, batch_size: int, epoch_seed: int,
                 crop_fraction: float = 0.8, augment_seed: Optional[int] = None,
                 start_batch: int = 0) -> Iterator[Batch]:
    """
    バッチを順に生成

    Args:
        start_batch: 途中のバッチから再開する場合の開始番号

    Raises:
        ConfigurationError: b がデータセットサイズを超える場合
    """
    _check_batch_size(dataset, batch_size)
    if augment_seed is None:
        augment_seed = epoch_seed

    order = epoch_order(len(dataset), epoch_seed)
    for batch_index in range(start_batch, batch_count(len(dataset), batch_size)):
        indices = order[batch_index * batch_size:(batch_index + 1) * batch_size]
        yield build_batch(dataset, indices, epoch_seed, batch_index, crop_fraction, augment_seed)


def make_batches(dataset: SyntheticDataset, batch_size: int, epoch_seed: int,
                 crop_fraction: float = 0.8, augment_seed: Optional[int] = None) -> List[Batch]:
    """
    1エポック分のバッチ列

    Examples:
        200枚、b=32 なら m=64 のバッチが6個。
    """
    return list(iter_batches(dataset, batch_size, epoch_seed, crop_fraction, augment_seed))


def prefetch_batches(dataset: SyntheticDataset, batch_size: int, epoch_seed: int,
                     crop_fraction: float = 0.8, augment_seed: Optional[int] = None,
                     max_ahead: int = 2) -> Iterator[Batch]:
    """
    別スレッドで先読みしながらバッチを生成

    バッチは番号順に取り出すため、結果は iter_batches と同一です。
    """
    _check_batch_size(dataset, batch_size)
    if augment_seed is None:
        augment_seed = epoch_seed

    order = epoch_order(len(dataset), epoch_seed)
    total = batch_count(len(dataset), batch_size)

    def submit(executor: ThreadPoolExecutor, batch_index: int):
        indices = order[batch_index * batch_size:(batch_index + 1) * batch_size]
        return executor.submit(build_batch, dataset, indices, epoch_seed, batch_index,
                               crop_fraction, augment_seed)

    with ThreadPoolExecutor(max_workers=1, thread_name_prefix="batch-prefetch") as executor:
        pending = [submit(executor, i) for i in range(min(max_ahead, total))]
        next_index = len(pending)
        while pending:
            future = pending.pop(0)
            if next_index < total:
                pending.append(submit(executor, next_index))
                next_index += 1
            yield future.result()

    logger.debug(f"先読みバッチ生成を完了しました: {total} バッチ")
