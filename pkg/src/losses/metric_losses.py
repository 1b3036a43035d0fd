"""
メトリック損失と再構成損失

セントロイドを基準にしたsoftmax型のメトリック損失、
セントロイドからの再構成損失、および多タスク損失の合成を行います。
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict

import torch

from src.domain.centroids import CentroidSet
from src.domain.loss_breakdown import LossBreakdown, LossWeights
from src.utils.exceptions import DegenerateDenominatorError, LossUsageError, NumericalFailureError

logger = logging.getLogger(__name__)


def reconstruction_loss(images: torch.Tensor, assignments: torch.Tensor, centroids: CentroidSet,
                        decoder: Callable[[torch.Tensor], torch.Tensor]) -> torch.Tensor:
    """
    再構成損失

    各画像を自分のクラスタのセントロイドの復号結果と比較し、
    画素ごとの二乗誤差を画像内で合計して m サンプルで平均します。

    Args:
        images: (m, C, H, W)
        assignments: (m,) のクラスタ番号
        centroids: セントロイド集合
        decoder: 表現 -> 画像

    Returns:
        0以上のスカラー

    Raises:
        CentroidConsistencyError: 割り当てられたクラスタにセントロイドがない場合
    """
    slots = centroids.slot_of(assignments)
    decoded = decoder(centroids.values)
    residual = images.to(decoded.dtype) - decoded[slots]
    return residual.pow(2).flatten(start_dim=1).sum(dim=1).mean()


def positive_term(f: torch.Tensor, f_hat: torch.Tensor, centroids: torch.Tensor, q: int,
                  temperature: float, include_positive_in_denominator: bool = False) -> torch.Tensor:
    """
    正例項 exp(fᵀf̂/τ) / Σ_{k≠q} exp(fᵀc_k/τ)

    Args:
        f: アンカーの埋め込み (d,)
        f_hat: 対の埋め込み (d,)
        centroids: (n, d) のセントロイド埋め込み
        q: アンカーが属するセントロイドの行番号
        temperature: τ
        include_positive_in_denominator: 分母に正例自身を加える変種

    Raises:
        DegenerateDenominatorError: アクティブなセントロイドが2つ未満
    """
    if centroids.shape[0] < 2:
        raise DegenerateDenominatorError(
            f"アクティブなセントロイドが {centroids.shape[0]} 個のため分母が空です"
        )
    positive = torch.exp(torch.dot(f, f_hat) / temperature)
    others = torch.cat([centroids[:q], centroids[q + 1:]])
    denominator = torch.exp(others @ f / temperature).sum()
    if include_positive_in_denominator:
        denominator = denominator + positive
    return positive / denominator


def negative_term(f: torch.Tensor, centroids: torch.Tensor, j: int, q: int, temperature: float) -> torch.Tensor:
    """
    負例項 1 − exp(fᵀc_j/τ) / Σ_k exp(fᵀc_k/τ)

    分母は自クラスタ q を含む全セントロイドで取ります。

    Raises:
        LossUsageError: j == q の場合
    """
    if j == q:
        raise LossUsageError(f"負例項は自クラスタ以外に対して計算します: j=q={q}")
    return 1.0 - torch.softmax(centroids @ f / temperature, dim=0)[j]


@dataclass
class MetricLossResult:
    """メトリック損失の計算結果"""

    value: torch.Tensor
    per_sample: torch.Tensor
    skipped_samples: int
    inner_products: int


def metric_loss(anchors: torch.Tensor, positives: torch.Tensor, centroids: torch.Tensor,
                slots: torch.Tensor, temperature: float,
                include_positive_in_denominator: bool = False,
                detach_centroid_denominator: bool = False) -> MetricLossResult:
    """
    セントロイド基準のsoftmaxメトリック損失

    サンプルごとに −log(正例項) − Σ_{j≠q} log(負例項) を計算し、全サンプルで合計します。
    内積は m·n（対セントロイド）+ m（正例対）回だけ計算します。

    Args:
        anchors: (m, d) のアンカー埋め込み
        positives: (m, d) の各アンカーの対の埋め込み
        centroids: (n, d) のセントロイド埋め込み
        slots: (m,) の各アンカーのセントロイド行番号
        temperature: τ
        include_positive_in_denominator: 正例項の分母に正例を含める
        detach_centroid_denominator: 正例項の分母でセントロイドへの勾配を止める

    Returns:
        損失値と診断情報。アクティブなセントロイドが2つ未満なら全サンプルをスキップし値は0。
    """
    m, n = anchors.shape[0], centroids.shape[0]
    inner_products = m * n + m

    if n < 2:
        logger.debug(f"アクティブなセントロイドが {n} 個のためメトリック損失をスキップします")
        zero = (anchors * 0.0).sum()
        return MetricLossResult(zero, anchors.new_zeros(m), skipped_samples=m, inner_products=inner_products)

    logits = anchors @ centroids.t() / temperature
    positive_logits = (anchors * positives).sum(dim=1) / temperature
    own = torch.nn.functional.one_hot(slots, n).bool()

    denominator_logits = anchors @ centroids.detach().t() / temperature if detach_centroid_denominator else logits
    denominator_logits = denominator_logits.masked_fill(own, float('-inf'))
    if include_positive_in_denominator:
        denominator_logits = torch.cat([denominator_logits, positive_logits.unsqueeze(1)], dim=1)
    log_positive = positive_logits - torch.logsumexp(denominator_logits, dim=1)

    probs = torch.softmax(logits, dim=1)
    log_negative = torch.log1p(-probs.masked_fill(own, 0.0)).sum(dim=1)

    per_sample = -(log_positive + log_negative)
    return MetricLossResult(per_sample.sum(), per_sample, skipped_samples=0, inner_products=inner_products)


def combined_loss(l_m: float, l_rim: float, l_rec: float, weights: LossWeights) -> LossBreakdown:
    """
    多タスク損失 L = α·L_m + β·L_rim + γ·L_rec の内訳を作成

    Raises:
        NumericalFailureError: いずれかの成分が非有限値の場合（成分名付き）
    """
    components: Dict[str, float] = {'l_m': float(l_m), 'l_rim': float(l_rim), 'l_rec': float(l_rec)}
    for name, value in components.items():
        if not math.isfinite(value):
            raise NumericalFailureError(f"損失成分 {name} が非有限値です: {value}", component=name)

    total = weights.alpha * components['l_m'] + weights.beta * components['l_rim'] + weights.gamma * components['l_rec']
    return LossBreakdown(l_m=components['l_m'], l_rim=components['l_rim'], l_rec=components['l_rec'], total=total)


def weighted_total(l_m: torch.Tensor, l_rim: torch.Tensor, l_rec: torch.Tensor,
                   weights: LossWeights) -> torch.Tensor:
    """重みが0でない項だけで逆伝播用の合計損失を組み立てる"""
    total = l_rim.new_zeros(())
    for weight, term in ((weights.alpha, l_m), (weights.beta, l_rim), (weights.gamma, l_rec)):
        if weight != 0.0:
            total = total + weight * term
    return total
