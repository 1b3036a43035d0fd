"""
クラスタリング損失

RIM（正則化付き情報量最大化）目的関数、バッチ内のエントロピー推定、
ハード割り当て、およびクラスタごとのセントロイド表現を計算します。
"""

import torch

from src.domain.centroids import CentroidSet
from src.domain.run_config import RimConfig
from src.utils.exceptions import EmptyBatchError


def _check_nonempty(probs: torch.Tensor) -> None:
    if probs.dim() != 2 or probs.shape[0] == 0:
        raise EmptyBatchError(f"割り当て分布のバッチが空です: shape={tuple(probs.shape)}")


def marginal_entropy(probs: torch.Tensor) -> torch.Tensor:
    """
    周辺エントロピー H(Y) = h(バッチ平均分布)

    Args:
        probs: (m, K) の割り当て分布

    Returns:
        [0, ln K] のスカラー

    Raises:
        EmptyBatchError: バッチが空の場合
    """
    _check_nonempty(probs)
    return torch.special.entr(probs.mean(dim=0)).sum()


def conditional_entropy(probs: torch.Tensor) -> torch.Tensor:
    """
    条件付きエントロピー H(Y|X) = 各サンプルのエントロピーの平均

    Raises:
        EmptyBatchError: バッチが空の場合
    """
    _check_nonempty(probs)
    return torch.special.entr(probs).sum(dim=1).mean()


def head_regularizer(head_weight: torch.Tensor, weight_decay: float) -> torch.Tensor:
    """R(θ) = weight_decay·‖W‖²（バイアスは含めない）"""
    return weight_decay * head_weight.pow(2).sum()


def rim_loss(probs: torch.Tensor, head_weight: torch.Tensor, cfg: RimConfig) -> torch.Tensor:
    """
    RIMクラスタリング損失

    L_rim = weight_decay·‖θ‖² − λ·(H(Y) − H(Y|X))

    Args:
        probs: (m, K) の割り当て分布（ロジットのsoftmax）
        head_weight: クラスタリングヘッドの重み
        cfg: RIM設定

    Returns:
        スカラー損失
    """
    information = marginal_entropy(probs) - conditional_entropy(probs)
    return head_regularizer(head_weight, cfg.weight_decay) - cfg.entropy_weight * information


def assign(probs: torch.Tensor) -> torch.Tensor:
    """
    ハード割り当て（argmax、同値の場合は最小のインデックス）

    勾配は流れません。
    """
    return probs.detach().argmax(dim=1)


def compute_centroids(representations: torch.Tensor, assignments: torch.Tensor,
                      num_clusters: int) -> CentroidSet:
    """
    空でないクラスタごとのセントロイド表現

    メンバーの表現の算術平均を、one-hot行列との積で計算します。
    結果は表現テンソルの計算グラフに接続されたままです。

    Args:
        representations: (m, d_r)
        assignments: (m,) のクラスタ番号
        num_clusters: K

    Returns:
        アクティブなクラスタのみを含むセントロイド集合
    """
    membership = torch.nn.functional.one_hot(assignments, num_clusters).to(representations.dtype)
    counts = membership.sum(dim=0)
    active = torch.nonzero(counts > 0, as_tuple=False).flatten()
    sums = membership[:, active].t() @ representations
    values = sums / counts[active].unsqueeze(1)
    return CentroidSet(
        values=values,
        cluster_indices=active,
        member_counts=counts[active].to(torch.long),
        num_clusters=num_clusters
    )
