"""
実行設定データクラス

データセット、モデル、クラスタリング、学習、勾配検査の各設定を
型付きの不変データクラスとして表現します。
検証エラーはキー名付きのConfigurationErrorとして送出されます。
"""

from dataclasses import dataclass, field
from typing import Tuple

import torch

from src.domain.loss_breakdown import AblationMode, LossWeights
from src.utils.exceptions import ConfigurationError


def _require(condition: bool, key: str, message: str) -> None:
    """条件を満たさない場合にキー名付きの設定エラーを送出"""
    if not condition:
        raise ConfigurationError(f"{key}: {message}", key=key)


@dataclass(frozen=True)
class DatasetConfig:
    """
    合成データセットの設定

    学習クラスは 0..num_classes-1、テストクラスはその後ろの
    num_test_classes 個で、両者は常に交わりません。
    """

    num_classes: int = 4
    num_test_classes: int = 4
    samples_per_class: int = 50
    image_shape: Tuple[int, int, int] = (1, 16, 16)
    noise_level: float = 0.1
    crop_fraction: float = 0.8
    split_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_shape", tuple(int(v) for v in self.image_shape))
        _require(self.num_classes >= 1, "dataset.num_classes", "1以上である必要があります")
        _require(self.num_test_classes >= 1, "dataset.num_test_classes", "1以上である必要があります")
        _require(self.samples_per_class >= 2, "dataset.samples_per_class", "2以上である必要があります")
        _require(len(self.image_shape) == 3 and all(v >= 1 for v in self.image_shape),
                 "dataset.image_shape", "(channels, height, width) の正の整数3要素である必要があります")
        _require(0.0 <= self.noise_level < 1.0, "dataset.noise_level", "0以上1未満である必要があります")
        _require(0.0 < self.crop_fraction <= 1.0, "dataset.crop_fraction", "(0, 1] の範囲である必要があります")

    @property
    def train_classes(self) -> Tuple[int, ...]:
        """学習用クラスID"""
        return tuple(range(self.num_classes))

    @property
    def test_classes(self) -> Tuple[int, ...]:
        """テスト用クラスID（学習クラスと交わらない）"""
        return tuple(range(self.num_classes, self.num_classes + self.num_test_classes))


@dataclass(frozen=True)
class ModelConfig:
    """
    ネットワーク構成

    エンコーダはストライド2の畳み込みを2段持つため、
    画像の高さと幅は4の倍数である必要があります。
    """

    image_shape: Tuple[int, int, int] = (1, 16, 16)
    representation_dim: int = 64
    embedding_dim: int = 16
    num_clusters: int = 32
    embedding_bias: bool = True
    encoder_channels: Tuple[int, int] = (8, 16)
    dtype: str = "float64"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_shape", tuple(int(v) for v in self.image_shape))
        object.__setattr__(self, "encoder_channels", tuple(int(v) for v in self.encoder_channels))
        channels, height, width = self.image_shape
        _require(height % 4 == 0 and width % 4 == 0, "dataset.image_shape",
                 "高さと幅は4の倍数である必要があります")
        _require(self.representation_dim >= 1, "model.representation_dim", "1以上である必要があります")
        _require(self.embedding_dim >= 2, "model.embedding_dim", "2以上である必要があります")
        _require(self.num_clusters >= 1, "clustering.num_clusters", "1以上である必要があります")
        _require(len(self.encoder_channels) == 2 and min(self.encoder_channels) >= 1,
                 "model.encoder_channels", "正の整数2要素である必要があります")
        _require(self.dtype in ("float32", "float64"), "model.dtype", "float32 または float64 である必要があります")

    @property
    def torch_dtype(self) -> torch.dtype:
        """torchのdtype"""
        return torch.float64 if self.dtype == "float64" else torch.float32


@dataclass(frozen=True)
class RimConfig:
    """RIMクラスタリング損失の設定"""

    num_clusters: int = 32
    entropy_weight: float = 1.0   # λ
    weight_decay: float = 1e-3    # R(θ) の係数

    def __post_init__(self):
        _require(self.num_clusters >= 1, "clustering.num_clusters", "1以上である必要があります")
        _require(self.entropy_weight > 0, "clustering.entropy_weight", "正の値である必要があります")
        _require(self.weight_decay >= 0, "clustering.weight_decay", "0以上である必要があります")


@dataclass(frozen=True)
class TrainConfig:
    """学習ループの設定"""

    epochs: int = 20
    batch_size: int = 16          # b（拡張後のバッチサイズ m = 2b）
    learning_rate: float = 0.01
    momentum: float = 0.9
    checkpoint_interval: int = 5
    ablation_mode: str = AblationMode.CBSWR
    shuffle_seed: int = 0
    augment_seed: int = 0
    crop_fraction: float = 0.8
    prefetch: bool = False
    include_positive_in_denominator: bool = False
    detach_centroid_denominator: bool = False
    loss_weights: LossWeights = field(default_factory=LossWeights)
    rim: RimConfig = field(default_factory=RimConfig)

    def __post_init__(self):
        _require(self.epochs >= 0, "training.epochs", "0以上である必要があります")
        _require(self.batch_size >= 1, "training.batch_size", "1以上である必要があります")
        _require(self.learning_rate >= 0, "training.learning_rate", "0以上である必要があります")
        _require(0.0 <= self.momentum < 1.0, "training.momentum", "[0, 1) の範囲である必要があります")
        _require(self.checkpoint_interval >= 1, "training.checkpoint_interval", "1以上である必要があります")
        _require(self.ablation_mode in AblationMode.ALL, "training.ablation_mode",
                 f"{AblationMode.ALL} のいずれかである必要があります")
        _require(0.0 < self.crop_fraction <= 1.0, "dataset.crop_fraction", "(0, 1] の範囲である必要があります")
        _require(self.rim.num_clusters <= self.batch_m, "clustering.num_clusters",
                 f"バッチサイズ m={self.batch_m} 以下である必要があります")

    @property
    def batch_m(self) -> int:
        """拡張後のバッチサイズ m"""
        return 2 * self.batch_size

    @property
    def effective_weights(self) -> LossWeights:
        """アブレーションモードで射影した損失重み"""
        return self.loss_weights.for_mode(self.ablation_mode)


@dataclass(frozen=True)
class GradCheckConfig:
    """有限差分による勾配検査の設定"""

    step: float = 1e-5
    tolerance: float = 1e-4
    num_batches: int = 5
    batch_size: int = 4
    num_clusters: int = 4
    max_coords_per_group: int = 24
    seed: int = 0

    def __post_init__(self):
        _require(self.step > 0, "gradcheck.step", "正の値である必要があります")
        _require(self.tolerance > 0, "gradcheck.tolerance", "正の値である必要があります")
        _require(self.num_batches >= 1, "gradcheck.num_batches", "1以上である必要があります")
        _require(self.batch_size >= 1, "gradcheck.batch_size", "1以上である必要があります")
        _require(1 <= self.num_clusters <= 2 * self.batch_size, "gradcheck.num_clusters",
                 "1以上かつ 2*batch_size 以下である必要があります")
        _require(self.max_coords_per_group >= 1, "gradcheck.max_coords_per_group", "1以上である必要があります")


@dataclass(frozen=True)
class RunConfig:
    """1回の実行を完全に記述する設定"""

    name: str
    output_dir: str
    dataset: DatasetConfig
    model: ModelConfig
    train: TrainConfig
    gradcheck: GradCheckConfig
    dataset_seed: int = 0
    recall_ks: Tuple[int, ...] = (1, 2, 4, 8)
    log_level: str = "INFO"
    debug: bool = False

    def __post_init__(self):
        object.__setattr__(self, "recall_ks", tuple(int(k) for k in self.recall_ks))
        _require(len(self.recall_ks) > 0 and min(self.recall_ks) >= 1, "evaluation.recall_ks",
                 "1以上の整数のリストである必要があります")
        _require(self.model.image_shape == self.dataset.image_shape, "dataset.image_shape",
                 "モデルとデータセットの画像形状が一致しません")
