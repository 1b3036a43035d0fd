"""
モデル一式

G, F, D, クラスタリングヘッド θ の4つのパラメータ群を束ね、
安定した順序でのパラメータ列挙と配列への書き出し・読み込みを提供します。
"""

import copy
import logging
from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np
import torch
from torch import nn

from src.domain.run_config import ModelConfig
from src.model.networks import ClusterHead, Decoder, EmbeddingModule, Encoder, init_uniform_
from src.utils.exceptions import CheckpointError

logger = logging.getLogger(__name__)

# パラメータ群の順序（チェックポイントの並び順でもある）
GROUP_NAMES = ("encoder", "embedding", "decoder", "cluster_head")


class ModelBundle(nn.Module):
    """
    4つのパラメータ群を持つモデル

    パラメータ名は "<群>.<層>.<weight|bias>" の形式で、順序は構築時に固定されます。
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config.image_shape, config.representation_dim, config.encoder_channels)
        self.embedding = EmbeddingModule(config.representation_dim, config.embedding_dim, config.embedding_bias)
        self.decoder = Decoder(config.image_shape, config.representation_dim, config.encoder_channels)
        self.cluster_head = ClusterHead(config.embedding_dim, config.num_clusters)
        self.to(config.torch_dtype)

    @classmethod
    def from_config(cls, config: ModelConfig) -> 'ModelBundle':
        """シード付き初期化済みのモデルを作成"""
        model = cls(config)
        generator = torch.Generator().manual_seed(config.init_seed)
        for name in GROUP_NAMES:
            init_uniform_(getattr(model, name), generator)
        logger.debug(f"モデルを初期化しました: パラメータ数={model.num_parameters()}, seed={config.init_seed}")
        return model

    @property
    def dtype(self) -> torch.dtype:
        return self.config.torch_dtype

    @property
    def num_clusters(self) -> int:
        return self.cluster_head.num_clusters

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        """画像 -> 表現ベクトル r = G(I)"""
        return self.encoder(images.to(self.dtype))

    def embed(self, representations: torch.Tensor) -> torch.Tensor:
        """表現 -> 単位ノルム埋め込み f = F(r)"""
        return self.embedding(representations)

    def decode(self, representations: torch.Tensor) -> torch.Tensor:
        """表現 -> 再構成画像 D(r)"""
        return self.decoder(representations)

    def cluster_logits(self, embeddings: torch.Tensor) -> torch.Tensor:
        """埋め込み -> K次元ロジット"""
        return self.cluster_head(embeddings)

    def forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """
        画像から (表現, 埋め込み, ロジット) を計算
        """
        representations = self.encode(images)
        embeddings = self.embed(representations)
        return representations, embeddings, self.cluster_logits(embeddings)

    def parameter_groups(self) -> "OrderedDict[str, OrderedDict[str, nn.Parameter]]":
        """群名 -> (パラメータ名 -> パラメータ) の順序付き辞書"""
        groups: "OrderedDict[str, OrderedDict[str, nn.Parameter]]" = OrderedDict()
        for group in GROUP_NAMES:
            groups[group] = OrderedDict(
                (f"{group}.{name}", param) for name, param in getattr(self, group).named_parameters()
            )
        return groups

    def ordered_parameters(self) -> Iterator[Tuple[str, nn.Parameter]]:
        """群の順にすべてのパラメータを列挙"""
        for params in self.parameter_groups().values():
            yield from params.items()

    def num_parameters(self) -> int:
        return sum(param.numel() for _, param in self.ordered_parameters())

    def head_weight(self) -> nn.Parameter:
        """正則化対象のクラスタリングヘッド重み"""
        return self.cluster_head.fc.weight

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        """全パラメータのnumpy配列（順序付き）"""
        return OrderedDict(
            (name, param.detach().cpu().numpy().copy()) for name, param in self.ordered_parameters()
        )

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """
        numpy配列からパラメータを復元

        Raises:
            CheckpointError: 名前や形状が一致しない場合
        """
        expected = dict(self.ordered_parameters())
        missing = sorted(set(expected) - set(arrays))
        unexpected = sorted(set(arrays) - set(expected))
        if missing or unexpected:
            raise CheckpointError(
                "チェックポイントのパラメータ構成が一致しません",
                details={"missing": missing, "unexpected": unexpected}
            )
        with torch.no_grad():
            for name, param in expected.items():
                value = torch.as_tensor(np.asarray(arrays[name]), dtype=param.dtype)
                if value.shape != param.shape:
                    raise CheckpointError(
                        f"パラメータ {name} の形状が一致しません: {tuple(value.shape)} != {tuple(param.shape)}"
                    )
                param.copy_(value)

    def clone(self) -> 'ModelBundle':
        """独立したコピー"""
        return copy.deepcopy(self)
