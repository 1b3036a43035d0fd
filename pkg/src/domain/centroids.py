"""
セントロイド集合

バッチ内で空でないクラスタごとの表現の平均（セントロイド表現）を保持します。
値は計算グラフに接続されたテンソルのままで、勾配はエンコーダまで流れます。
"""

from dataclasses import dataclass
from typing import Dict, List

import torch

from src.utils.exceptions import CentroidConsistencyError


@dataclass(frozen=True)
class CentroidRepresentation:
    """1クラスタ分のセントロイド表現（診断・テスト用の分解形）"""

    values: torch.Tensor
    member_count: int
    cluster_index: int


@dataclass(frozen=True)
class CentroidSet:
    """
    アクティブなクラスタのセントロイド

    Attributes:
        values: (n_active, d) のセントロイド値
        cluster_indices: 各行のクラスタ番号（昇順）
        member_counts: 各行のメンバー数（>= 1）
        num_clusters: クラスタ総数 K
    """

    values: torch.Tensor
    cluster_indices: torch.Tensor
    member_counts: torch.Tensor
    num_clusters: int

    def __len__(self) -> int:
        return int(self.cluster_indices.shape[0])

    def slot_of(self, assignments: torch.Tensor) -> torch.Tensor:
        """
        クラスタ番号を values の行番号に変換

        Args:
            assignments: (m,) のクラスタ割り当て

        Returns:
            (m,) の行番号

        Raises:
            CentroidConsistencyError: セントロイドのないクラスタが割り当てられている場合
        """
        lookup = torch.full((self.num_clusters,), -1, dtype=torch.long)
        lookup[self.cluster_indices] = torch.arange(len(self), dtype=torch.long)
        slots = lookup[assignments]
        if bool((slots < 0).any()):
            missing = sorted(set(assignments[slots < 0].tolist()))
            raise CentroidConsistencyError(
                f"セントロイドが存在しないクラスタへの割り当てがあります: {missing}",
                details={"missing_clusters": missing}
            )
        return slots

    def sizes(self) -> Dict[int, int]:
        """クラスタ番号 -> メンバー数"""
        return {int(c): int(n) for c, n in zip(self.cluster_indices.tolist(), self.member_counts.tolist())}

    def representations(self) -> List[CentroidRepresentation]:
        """クラスタごとの分解形"""
        return [
            CentroidRepresentation(self.values[row], int(self.member_counts[row]), int(self.cluster_indices[row]))
            for row in range(len(self))
        ]
