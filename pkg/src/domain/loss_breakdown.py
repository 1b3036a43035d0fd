"""
損失の重みと内訳

多タスク損失 L = α·L_m + β·L_rim + γ·L_rec の重み・温度と、
バッチごとの各成分の値を保持します。
"""

import math
from dataclasses import dataclass, replace
from typing import Dict

from src.utils.exceptions import ConfigurationError


class AblationMode:
    """アブレーションモード定数（有効な損失項の組み合わせ）"""
    ONLY_RIM = "only_rim"   # クラスタリング損失のみ
    CBS = "cbs"             # クラスタリング + メトリック損失
    CBSWR = "cbswr"         # 3損失すべて（完全版）

    ALL = (ONLY_RIM, CBS, CBSWR)


@dataclass(frozen=True)
class LossWeights:
    """
    損失の重みと温度パラメータ

    重みは0を許容します（アブレーションで無効化された項）。
    利用者が設定する値が正であることは設定検証側で保証します。
    """

    alpha: float = 0.9        # メトリック損失の重み
    beta: float = 0.3         # クラスタリング損失の重み
    gamma: float = 0.01       # 再構成損失の重み
    temperature: float = 0.1  # softmax温度 τ

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"loss.{name} は0以上の有限値である必要があります: {value}",
                                         key=f"loss.{name}")
        if not math.isfinite(self.temperature) or self.temperature <= 0:
            raise ConfigurationError(f"loss.temperature は正の値である必要があります: {self.temperature}",
                                     key="loss.temperature")

    def for_mode(self, mode: str) -> 'LossWeights':
        """
        アブレーションモードに応じて無効な項の重みを0にした重みを返す

        Args:
            mode: AblationModeのいずれか

        Returns:
            射影後の重み
        """
        if mode == AblationMode.ONLY_RIM:
            return replace(self, alpha=0.0, gamma=0.0)
        if mode == AblationMode.CBS:
            return replace(self, gamma=0.0)
        if mode == AblationMode.CBSWR:
            return self
        raise ConfigurationError(f"不明なアブレーションモード: {mode}", key="training.ablation_mode")


@dataclass(frozen=True)
class LossBreakdown:
    """1バッチ分の損失内訳"""

    l_m: float
    l_rim: float
    l_rec: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        """辞書形式に変換"""
        return {
            'l_m': self.l_m,
            'l_rim': self.l_rim,
            'l_rec': self.l_rec,
            'total': self.total
        }
