"""
評価用の埋め込みインデックスと評価レポート
"""

import json
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from src.utils.exceptions import DataValidationError

# 行ノルムと1との差の許容値（float32 の埋め込みも通る幅）
UNIT_NORM_TOLERANCE = 1e-6


@dataclass
class EmbeddingIndex:
    """
    テスト集合の埋め込みインデックス

    各行は単位ノルム、labelsは行と対応する正解クラスIDです。

    Raises:
        DataValidationError: 形状の不一致、または行ノルムが1から
            UNIT_NORM_TOLERANCE を超えてずれている（非有限値を含む）場合
    """

    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2:
            raise DataValidationError("埋め込みは2次元配列である必要があります")
        if self.labels.shape != (self.embeddings.shape[0],):
            raise DataValidationError("ラベル数と埋め込みの行数が一致しません")
        deviation = self.max_norm_deviation()
        if not deviation <= UNIT_NORM_TOLERANCE:
            raise DataValidationError(f"埋め込みの行ノルムが1ではありません（最大偏差 {deviation:.3e}）",
                                      details={"max_norm_deviation": deviation, "tolerance": UNIT_NORM_TOLERANCE})

    def __len__(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dim(self) -> int:
        """埋め込み次元"""
        return int(self.embeddings.shape[1])

    def max_norm_deviation(self) -> float:
        """行ノルムと1との差の最大値"""
        if len(self) == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.norm(self.embeddings, axis=1) - 1.0)))


@dataclass
class EvalReport:
    """Recall@K と NMI の評価結果"""

    recall_at: Dict[int, float]
    nmi: float
    num_queries: int
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換（JSONのキーは文字列）"""
        return {
            'recall_at': {str(k): v for k, v in sorted(self.recall_at.items())},
            'nmi': self.nmi,
            'num_queries': self.num_queries,
            **self.extras
        }

    def to_json(self) -> str:
        """JSON文字列に変換"""
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EvalReport':
        """辞書から復元"""
        extras = {k: v for k, v in data.items() if k not in ('recall_at', 'nmi', 'num_queries')}
        return cls(
            recall_at={int(k): float(v) for k, v in data['recall_at'].items()},
            nmi=float(data['nmi']),
            num_queries=int(data['num_queries']),
            extras=extras
        )

    def summary_row(self) -> Dict[str, float]:
        """比較表の1行（NMI, R@1, R@2, ...）"""
        row = {'NMI': self.nmi}
        for k in sorted(self.recall_at):
            row[f'R@{k}'] = self.recall_at[k]
        return row
