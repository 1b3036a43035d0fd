"""
画像サンプルとバッチ

入力画像、その幾何変換版（拡張画像）との組、
および原画像と拡張画像を交互に並べた学習バッチを表現します。
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.utils.exceptions import ConfigurationError, DataValidationError


@dataclass
class ImageSample:
    """
    画像サンプル

    画素値は (channels, height, width) 形状の実数配列で、[0, 1] に収まります。
    labelは評価専用で、学習には使用しません。
    """

    pixels: np.ndarray
    sample_id: int
    is_augmented: bool = False
    label: int = -1

    def __post_init__(self):
        """初期化後の検証"""
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3:
            raise DataValidationError(f"画素配列は3次元である必要があります: shape={self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise DataValidationError("画素値に非有限値が含まれています")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise DataValidationError("画素値は [0, 1] の範囲である必要があります")

    @property
    def shape(self) -> Tuple[int, int, int]:
        """画像形状"""
        return tuple(self.pixels.shape)

    def check_shape(self, expected: Sequence[int]) -> None:
        """
        設定された画像形状との一致を確認

        Raises:
            ConfigurationError: 形状が一致しない場合
        """
        if self.shape != tuple(expected):
            raise ConfigurationError(
                f"画像形状 {self.shape} が設定 {tuple(expected)} と一致しません",
                key="dataset.image_shape"
            )


@dataclass
class AugmentedPair:
    """原画像と拡張画像の組"""

    original: ImageSample
    augmented: ImageSample
    pair_id: int


@dataclass
class Batch:
    """
    学習バッチ

    samplesは [原画像0, 拡張0, 原画像1, 拡張1, ...] の順に交互に並び、
    i番目のサンプルの対は i ^ 1 番目です。m = 2b。
    """

    samples: List[ImageSample] = field(default_factory=list)

    def __post_init__(self):
        if len(self.samples) % 2 != 0:
            raise DataValidationError("バッチは原画像と拡張画像の組で構成される必要があります")
        for i in range(0, len(self.samples), 2):
            if self.samples[i].is_augmented or not self.samples[i + 1].is_augmented:
                raise DataValidationError(f"バッチの{i}番目の組が原画像・拡張画像の順になっていません")

    @classmethod
    def from_pairs(cls, pairs: Sequence[AugmentedPair]) -> 'Batch':
        """組のリストから交互配置のバッチを作成"""
        samples: List[ImageSample] = []
        for pair in pairs:
            samples.append(pair.original)
            samples.append(pair.augmented)
        return cls(samples)

    @property
    def m(self) -> int:
        """拡張後のバッチサイズ"""
        return len(self.samples)

    @property
    def augmented_count(self) -> int:
        """拡張画像の数（= b）"""
        return sum(1 for sample in self.samples if sample.is_augmented)

    def pairs(self) -> List[AugmentedPair]:
        """組のリストに戻す"""
        return [
            AugmentedPair(self.samples[i], self.samples[i + 1], pair_id=i // 2)
            for i in range(0, self.m, 2)
        ]

    def twin_index(self) -> torch.Tensor:
        """各サンプルの対（正例）のインデックス"""
        return torch.arange(self.m) ^ 1

    def labels(self) -> np.ndarray:
        """評価用ラベル"""
        return np.array([sample.label for sample in self.samples], dtype=np.int64)

    def to_tensor(self, dtype: torch.dtype = torch.float64,
                  expected_shape: Optional[Sequence[int]] = None) -> torch.Tensor:
        """
        画素を (m, C, H, W) テンソルにまとめる

        Args:
            dtype: 出力dtype
            expected_shape: 指定時は各サンプルの形状を検証

        Returns:
            画像テンソル
        """
        if expected_shape is not None:
            for sample in self.samples:
                sample.check_shape(expected_shape)
        return samples_to_tensor(self.samples, dtype)


def samples_to_tensor(samples: Sequence[ImageSample], dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """
    サンプル列を画像テンソルに変換

    Raises:
        DataValidationError: 空のリスト
        ConfigurationError: 形状が揃っていない場合
    """
    if len(samples) == 0:
        raise DataValidationError("空のサンプル列はテンソルに変換できません")
    shape = samples[0].shape
    for sample in samples:
        sample.check_shape(shape)
    return torch.from_numpy(np.stack([sample.pixels for sample in samples])).to(dtype)
