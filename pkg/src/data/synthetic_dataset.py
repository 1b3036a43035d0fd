"""
合成画像データセット

クラスごとに固有の周波数対 (a, b) を持つ余弦テクスチャに
画素ノイズを混ぜた画像を生成します。ラベルは評価専用です。
生成は (DatasetConfig, seed) の純関数です。
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.domain.image_sample import ImageSample
from src.domain.run_config import DatasetConfig
from src.utils.exceptions import DataValidationError

logger = logging.getLogger(__name__)

# 周波数の上限（16x16 画像で折り返しが起きない範囲）
MAX_FREQUENCY = 6


def _frequency_table() -> List[Tuple[int, int]]:
    """クラスIDに割り当てる周波数対の一覧（低周波から順）"""
    pairs = itertools.product(range(1, MAX_FREQUENCY + 1), repeat=2)
    return sorted(pairs, key=lambda p: (p[0] + p[1], p[0]))


_FREQUENCIES = _frequency_table()


def class_frequencies(class_id: int) -> Tuple[int, int]:
    """
    クラスIDに対応する周波数対

    Raises:
        DataValidationError: 利用可能なクラス数を超える場合
    """
    if not 0 <= class_id < len(_FREQUENCIES):
        raise DataValidationError(
            f"クラスID {class_id} は範囲外です（最大 {len(_FREQUENCIES) - 1}）"
        )
    return _FREQUENCIES[class_id]


def class_pattern(class_id: int, image_shape: Sequence[int]) -> np.ndarray:
    """
    クラスの基本パターン

    0.5 + 0.5·cos(2πa(x−0.5))·cos(2πb(y−0.5)) を画素中心で評価します。
    中心に対して左右対称なので、水平反転でクラスが変わりません。
    """
    channels, height, width = image_shape
    a, b = class_frequencies(class_id)
    x = (np.arange(width) + 0.5) / width
    y = (np.arange(height) + 0.5) / height
    pattern = 0.5 + 0.5 * np.outer(np.cos(2 * np.pi * b * (y - 0.5)), np.cos(2 * np.pi * a * (x - 0.5)))
    return np.broadcast_to(pattern, (channels, height, width)).copy()


@dataclass
class SyntheticDataset:
    """
    ラベル付き画像集合

    Attributes:
        images: (n, C, H, W) の画素配列
        labels: (n,) のクラスID
        seed: 生成シード
        config: 生成に用いた設定
    """

    images: np.ndarray
    labels: np.ndarray
    seed: int
    config: DatasetConfig = field(default_factory=DatasetConfig)

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataValidationError(f"画像配列は4次元である必要があります: shape={self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataValidationError("ラベル数と画像数が一致しません")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def classes(self) -> List[int]:
        """含まれるクラスID（昇順）"""
        return sorted(set(self.labels.tolist()))

    def sample(self, index: int) -> ImageSample:
        """index番目の画像をImageSampleとして取得"""
        return ImageSample(self.images[index], sample_id=index, label=int(self.labels[index]))

    def samples(self) -> List[ImageSample]:
        """全画像のImageSample"""
        return [self.sample(i) for i in range(len(self))]

    def class_histogram(self) -> Dict[int, int]:
        """クラスごとの画像数"""
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def generate_dataset(cfg: DatasetConfig, seed: int, classes: Optional[Sequence[int]] = None) -> SyntheticDataset:
    """
    合成データセットを生成

    各クラスのノイズは (seed, class_id) から導いた独立な乱数列で生成するため、
    クラス集合が変わっても同じクラスの画像は変わりません。

    Args:
        cfg: データセット設定
        seed: 生成シード
        classes: 生成するクラスID（Noneの場合は学習クラス）

    Returns:
        生成されたデータセット
    """
    if classes is None:
        classes = cfg.train_classes

    images = []
    labels = []
    for class_id in classes:
        pattern = class_pattern(class_id, cfg.image_shape)
        rng = np.random.default_rng([seed, class_id])
        noise = rng.random((cfg.samples_per_class, *cfg.image_shape))
        images.append((1.0 - cfg.noise_level) * pattern[None] + cfg.noise_level * noise)
        labels.append(np.full(cfg.samples_per_class, class_id, dtype=np.int64))

    dataset = SyntheticDataset(
        images=np.clip(np.concatenate(images), 0.0, 1.0),
        labels=np.concatenate(labels),
        seed=seed,
        config=cfg
    )
    logger.debug(f"合成データセットを生成しました: classes={list(classes)}, n={len(dataset)}")
    return dataset


def generate_splits(cfg: DatasetConfig, seed: int) -> Tuple[SyntheticDataset, SyntheticDataset]:
    """
    学習用とテスト用のデータセットを生成

    テストクラスは学習クラスと交わりません。

    Returns:
        (学習データ, テストデータ)
    """
    train = generate_dataset(cfg, seed, cfg.train_classes)
    test = generate_dataset(cfg, seed, cfg.test_classes)
    return train, test
