"""
メトリック損失の計算量計測

バッチサイズ m を固定してクラスタ数 K を変え、メトリック損失の
中央値実行時間と内積回数を測ります。原点を通る直線への当てはめで
K に対する線形性を確認します。
"""

import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import torch

from src.losses.metric_losses import metric_loss


@dataclass
class ScalingPoint:
    num_clusters: int
    median_seconds: float
    inner_products: int


@dataclass
class ScalingReport:
    """K に対する実行時間の当てはめ結果"""

    batch_size: int
    points: List[ScalingPoint] = field(default_factory=list)

    @property
    def slope(self) -> float:
        """原点を通る最小二乗直線 t = s·K の傾き"""
        numerator = sum(p.num_clusters * p.median_seconds for p in self.points)
        denominator = sum(p.num_clusters ** 2 for p in self.points)
        return numerator / denominator if denominator else 0.0

    def deviations(self) -> Dict[int, float]:
        """各点の直線からの相対偏差"""
        slope = self.slope
        return {
            p.num_clusters: abs(p.median_seconds - slope * p.num_clusters) / (slope * p.num_clusters)
            for p in self.points if slope > 0
        }

    @property
    def max_deviation(self) -> float:
        return max(self.deviations().values(), default=0.0)

    def to_dict(self) -> Dict[str, object]:
        return {
            'batch_size': self.batch_size,
            'slope': self.slope,
            'max_deviation': self.max_deviation,
            'points': [
                {'K': p.num_clusters, 'median_seconds': p.median_seconds, 'inner_products': p.inner_products}
                for p in self.points
            ]
        }


def _unit_rows(rows: int, dim: int, generator: torch.Generator) -> torch.Tensor:
    values = torch.randn(rows, dim, generator=generator, dtype=torch.float64)
    return values / values.norm(dim=1, keepdim=True)


def measure_metric_loss_scaling(m: int = 64, ks: Sequence[int] = (8, 16, 32, 64), repeats: int = 15,
                                embedding_dim: int = 16, temperature: float = 0.1,
                                seed: int = 0) -> ScalingReport:
    """
    K ごとのメトリック損失の実行時間を計測

    全 K 個のセントロイドがアクティブな状態で、順伝播と逆伝播の時間を測ります。

    Args:
        m: バッチサイズ
        ks: 計測するクラスタ数
        repeats: 各 K の反復回数（中央値を採用）

    Returns:
        計測結果
    """
    generator = torch.Generator().manual_seed(seed)
    report = ScalingReport(batch_size=m)
    for k in ks:
        anchors = _unit_rows(m, embedding_dim, generator).requires_grad_(True)
        positives = _unit_rows(m, embedding_dim, generator)
        centroids = _unit_rows(k, embedding_dim, generator).requires_grad_(True)
        slots = torch.arange(m) % k

        timings = []
        inner_products = 0
        for _ in range(repeats):
            started = time.perf_counter()
            result = metric_loss(anchors, positives, centroids, slots, temperature)
            result.value.backward()
            timings.append(time.perf_counter() - started)
            inner_products = result.inner_products
            anchors.grad = None
            centroids.grad = None

        report.points.append(ScalingPoint(k, statistics.median(timings), inner_products))
    return report
