"""
ネットワーク構成要素

エンコーダ G、埋め込みモジュール F（全結合 + L2正規化）、
デコーダ D、クラスタリングヘッドの4つを定義します。
有限差分による勾配検査が成り立つよう、活性化はtanh/sigmoidのみを用い、
ReLU・プーリング・バッチ正規化は使いません。
"""

import math
from typing import Sequence, Tuple

import torch
from torch import nn

from src.utils.exceptions import ConfigurationError, DegenerateEmbeddingError

# L2正規化前のノルムの下限
MIN_EMBEDDING_NORM = 1e-12


def init_uniform_(module: nn.Module, generator: torch.Generator) -> None:
    """
    ファンイン基準の一様分布でパラメータを初期化

    重みと同じ層のバイアスは U(-1/sqrt(fan_in), 1/sqrt(fan_in)) から
    シード付きの生成器で順にサンプリングします。
    """
    for layer in module.modules():
        weight = getattr(layer, 'weight', None)
        if not isinstance(weight, nn.Parameter):
            continue
        bound = 1.0 / math.sqrt(weight[0].numel())
        with torch.no_grad():
            weight.uniform_(-bound, bound, generator=generator)
            bias = getattr(layer, 'bias', None)
            if isinstance(bias, nn.Parameter):
                bias.uniform_(-bound, bound, generator=generator)


class Encoder(nn.Module):
    """
    エンコーダ G

    ストライド2の畳み込み2段 + 平坦化 + 全結合で、画像を d_r 次元の表現ベクトルに写します。
    """

    def __init__(self, image_shape: Tuple[int, int, int], representation_dim: int,
                 channels: Sequence[int] = (8, 16)):
        super().__init__()
        self.image_shape = tuple(image_shape)
        in_channels, height, width = self.image_shape
        c1, c2 = channels
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, c1, kernel_size=4, stride=2, padding=1),
            nn.Tanh(),
            nn.Conv2d(c1, c2, kernel_size=4, stride=2, padding=1),
            nn.Tanh(),
            nn.Flatten()
        )
        self.fc = nn.Linear(c2 * (height // 4) * (width // 4), representation_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """
        Args:
            images: (n, C, H, W)

        Returns:
            (n, d_r) の表現ベクトル

        Raises:
            ConfigurationError: 画像形状が設定と一致しない場合
        """
        if images.dim() != 4 or tuple(images.shape[1:]) != self.image_shape:
            raise ConfigurationError(
                f"入力画像の形状 {tuple(images.shape)} が設定 {self.image_shape} と一致しません",
                key="dataset.image_shape"
            )
        return self.fc(self.features(images))


class EmbeddingModule(nn.Module):
    """
    埋め込みモジュール F

    全結合層のあとにL2正規化を行い、単位ノルムの埋め込みを返します。
    正規化前のノルムが極端に小さい場合はεを足さずにエラーとします。
    """

    def __init__(self, representation_dim: int, embedding_dim: int, bias: bool = True):
        super().__init__()
        self.fc = nn.Linear(representation_dim, embedding_dim, bias=bias)

    def forward(self, representations: torch.Tensor) -> torch.Tensor:
        """
        Args:
            representations: (n, d_r) または (d_r,)

        Returns:
            単位ノルムの埋め込み

        Raises:
            DegenerateEmbeddingError: 正規化前のノルムが 1e-12 未満
        """
        projected = self.fc(representations)
        norms = projected.norm(dim=-1, keepdim=True)
        if bool((norms < MIN_EMBEDDING_NORM).any()):
            raise DegenerateEmbeddingError(
                "正規化前の埋め込みのノルムがほぼゼロです",
                details={"min_norm": float(norms.min())}
            )
        return projected / norms


class Decoder(nn.Module):
    """
    デコーダ D

    全結合 + 転置畳み込み2段で表現ベクトルを画像に戻します。出力はsigmoidで [0, 1]。
    """

    def __init__(self, image_shape: Tuple[int, int, int], representation_dim: int,
                 channels: Sequence[int] = (8, 16)):
        super().__init__()
        self.image_shape = tuple(image_shape)
        out_channels, height, width = self.image_shape
        c1, c2 = channels
        self.representation_dim = representation_dim
        self.fc = nn.Linear(representation_dim, c2 * (height // 4) * (width // 4))
        self.deconv = nn.Sequential(
            nn.Tanh(),
            nn.Unflatten(1, (c2, height // 4, width // 4)),
            nn.ConvTranspose2d(c2, c1, kernel_size=4, stride=2, padding=1),
            nn.Tanh(),
            nn.ConvTranspose2d(c1, out_channels, kernel_size=4, stride=2, padding=1),
            nn.Sigmoid()
        )

    def forward(self, representations: torch.Tensor) -> torch.Tensor:
        """
        Args:
            representations: (n, d_r)

        Returns:
            (n, C, H, W) の再構成画像
        """
        if representations.dim() != 2 or representations.shape[1] != self.representation_dim:
            raise ConfigurationError(
                f"デコーダ入力の形状 {tuple(representations.shape)} が d_r={self.representation_dim} と一致しません",
                key="model.representation_dim"
            )
        return self.deconv(self.fc(representations))


class ClusterHead(nn.Module):
    """クラスタリングヘッド（埋め込みから K 次元のロジットへの全結合層）"""

    def __init__(self, embedding_dim: int, num_clusters: int):
        super().__init__()
        self.fc = nn.Linear(embedding_dim, num_clusters)

    @property
    def num_clusters(self) -> int:
        return self.fc.out_features

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        return self.fc(embeddings)
