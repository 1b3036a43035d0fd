"""
学習ループ

順伝播（エンコード → 埋め込み → クラスタリング → 割り当て → セントロイド →
再構成・メトリック項）から多タスク損失を求め、逆伝播し、
モーメンタム付きSGDで全パラメータ群を同時に更新します。
"""

import copy
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import torch

from src.data.batching import derive_seed, iter_batches, prefetch_batches
from src.data.config_manager import ConfigManager
from src.data.synthetic_dataset import SyntheticDataset
from src.domain.centroids import CentroidSet
from src.domain.image_sample import Batch
from src.domain.loss_breakdown import LossBreakdown, LossWeights
from src.domain.run_config import TrainConfig
from src.losses.clustering import assign, compute_centroids, rim_loss
from src.losses.metric_losses import combined_loss, metric_loss, reconstruction_loss, weighted_total
from src.model.checkpoint import CheckpointData, checkpoint_name, save_checkpoint
from src.model.model_bundle import ModelBundle
from src.utils.exceptions import ConfigurationError, NumericalFailureError
from src.utils.logging_config import performance_monitor
from src.utils.metrics_log import MetricsLog

logger = logging.getLogger(__name__)


def configure_determinism() -> None:
    """決定的なアルゴリズムのみを使うようtorchを設定"""
    torch.use_deterministic_algorithms(True, warn_only=True)


@dataclass
class StepDiagnostics:
    """1ステップ分の診断情報"""

    active_clusters: int
    skipped_samples: int
    min_cluster_size: int
    max_cluster_size: int
    inner_products: int

    def to_dict(self) -> Dict[str, int]:
        return {
            'active_clusters': self.active_clusters,
            'skipped_samples': self.skipped_samples,
            'min_cluster_size': self.min_cluster_size,
            'max_cluster_size': self.max_cluster_size
        }


@dataclass
class ForwardResult:
    """順伝播で得た各損失テンソルと中間結果"""

    l_m: torch.Tensor
    l_rim: torch.Tensor
    l_rec: torch.Tensor
    assignments: torch.Tensor
    centroids: CentroidSet
    diagnostics: StepDiagnostics

    def component(self, name: str) -> torch.Tensor:
        """成分名（l_m / l_rim / l_rec）でテンソルを取得"""
        return {'l_m': self.l_m, 'l_rim': self.l_rim, 'l_rec': self.l_rec}[name]


def forward_losses(model: ModelBundle, images: torch.Tensor, twin_index: torch.Tensor, cfg: TrainConfig,
                   assignments: Optional[torch.Tensor] = None) -> ForwardResult:
    """
    バッチの3つの損失を計算

    Args:
        model: モデル
        images: (m, C, H, W)
        twin_index: (m,) 各サンプルの対のインデックス
        cfg: 学習設定
        assignments: 固定するハード割り当て（Noneの場合はargmaxで決定）

    Returns:
        損失テンソルと診断情報
    """
    images = images.to(model.dtype)
    representations = model.encode(images)
    embeddings = model.embed(representations)
    probs = torch.softmax(model.cluster_logits(embeddings), dim=1)

    l_rim = rim_loss(probs, model.head_weight(), cfg.rim)

    if assignments is None:
        assignments = assign(probs)
    centroids = compute_centroids(representations, assignments, model.num_clusters)
    slots = centroids.slot_of(assignments)

    l_rec = reconstruction_loss(images, assignments, centroids, model.decode)

    centroid_embeddings = model.embed(centroids.values)
    weights = cfg.loss_weights
    metric = metric_loss(
        embeddings, embeddings[twin_index], centroid_embeddings, slots, weights.temperature,
        include_positive_in_denominator=cfg.include_positive_in_denominator,
        detach_centroid_denominator=cfg.detach_centroid_denominator
    )

    sizes = centroids.member_counts
    diagnostics = StepDiagnostics(
        active_clusters=len(centroids),
        skipped_samples=metric.skipped_samples,
        min_cluster_size=int(sizes.min()),
        max_cluster_size=int(sizes.max()),
        inner_products=metric.inner_products
    )
    return ForwardResult(metric.value, l_rim, l_rec, assignments, centroids, diagnostics)


@dataclass
class TrainState:
    """
    学習状態

    Attributes:
        model: モデル
        velocity: パラメータ名 -> モーメンタムバッファ
        epoch: 完了したエポック数
        global_step: 完了したステップ数
        seeds: 使用したシード
        cumulative: 累積メトリクス
        last_diagnostics: 直近ステップの診断情報
    """

    model: ModelBundle
    velocity: "OrderedDict[str, torch.Tensor]"
    epoch: int = 0
    global_step: int = 0
    seeds: Dict[str, int] = field(default_factory=dict)
    cumulative: Dict[str, float] = field(default_factory=dict)
    last_diagnostics: Optional[StepDiagnostics] = None

    @classmethod
    def initial(cls, model: ModelBundle, seeds: Optional[Dict[str, int]] = None) -> 'TrainState':
        """ゼロのモーメンタムで初期状態を作成"""
        velocity = OrderedDict(
            (name, torch.zeros_like(param, memory_format=torch.contiguous_format))
            for name, param in model.ordered_parameters()
        )
        return cls(model=model, velocity=velocity, seeds=dict(seeds or {}),
                   cumulative={'steps': 0, 'skipped_samples': 0, 'total_sum': 0.0})

    @classmethod
    def from_checkpoint(cls, data: CheckpointData, model: Optional[ModelBundle] = None) -> 'TrainState':
        """チェックポイントの内容から学習状態を復元"""
        if model is None:
            model = data.build_model()
        else:
            model.load_state_arrays(data.params)
        state = cls.initial(model, data.metadata.get('seeds'))
        for name, value in data.velocity.items():
            if name in state.velocity:
                state.velocity[name] = torch.as_tensor(value, dtype=state.velocity[name].dtype).clone()
        state.epoch = data.epoch
        state.global_step = data.global_step
        state.cumulative.update(data.metadata.get('cumulative', {}))
        return state

    def velocity_arrays(self) -> Dict[str, Any]:
        return OrderedDict((name, value.detach().cpu().numpy().copy()) for name, value in self.velocity.items())

    def clone(self) -> 'TrainState':
        """独立したコピー"""
        return copy.deepcopy(self)


def _check_cluster_count(model: ModelBundle, batch: Batch) -> None:
    if model.num_clusters > batch.m:
        raise ConfigurationError(
            f"クラスタ数 K={model.num_clusters} がバッチサイズ m={batch.m} を超えています",
            key="clustering.num_clusters"
        )


def sgd_momentum_update(model: ModelBundle, velocity: Dict[str, torch.Tensor],
                        learning_rate: float, momentum: float) -> None:
    """v ← μ·v − lr·g, p ← p + v（勾配のないパラメータは g = 0）"""
    with torch.no_grad():
        for name, param in model.ordered_parameters():
            buffer = velocity[name]
            buffer.mul_(momentum)
            if param.grad is not None:
                buffer.add_(param.grad, alpha=-learning_rate)
            param.add_(buffer)


def train_step(state: TrainState, batch: Batch, cfg: TrainConfig) -> Tuple[TrainState, LossBreakdown]:
    """
    1バッチ分の学習ステップ

    Args:
        state: 学習状態（更新されます）
        batch: 交互配置のバッチ
        cfg: 学習設定

    Returns:
        (更新後の状態, 更新前パラメータでの損失内訳)

    Raises:
        ConfigurationError: K > m
        NumericalFailureError: 損失が非有限値（成分名付き）
    """
    model = state.model
    _check_cluster_count(model, batch)
    weights: LossWeights = cfg.effective_weights

    images = batch.to_tensor(model.dtype, expected_shape=model.config.image_shape)
    model.zero_grad(set_to_none=True)
    result = forward_losses(model, images, batch.twin_index(), cfg)

    breakdown = combined_loss(float(result.l_m), float(result.l_rim), float(result.l_rec), weights)
    total = weighted_total(result.l_m, result.l_rim, result.l_rec, weights)
    total.backward()

    for name, param in model.ordered_parameters():
        if param.grad is not None and not bool(torch.isfinite(param.grad).all()):
            raise NumericalFailureError(f"パラメータ {name} の勾配が非有限値です", component=name)

    sgd_momentum_update(model, state.velocity, cfg.learning_rate, cfg.momentum)

    if result.diagnostics.skipped_samples:
        logger.warning(
            f"アクティブなクラスタが1つのため {result.diagnostics.skipped_samples} サンプルを"
            f"メトリック損失から除外しました (step={state.global_step})"
        )

    state.global_step += 1
    state.last_diagnostics = result.diagnostics
    state.cumulative['steps'] = state.cumulative.get('steps', 0) + 1
    state.cumulative['skipped_samples'] = state.cumulative.get('skipped_samples', 0) + result.diagnostics.skipped_samples
    state.cumulative['total_sum'] = state.cumulative.get('total_sum', 0.0) + breakdown.total
    return state, breakdown


@dataclass
class FitResult:
    """学習結果"""

    state: TrainState
    history: List[Dict[str, Any]]
    checkpoints: List[Path]
    train_seconds: float

    def epoch_means(self, key: str = 'total') -> List[float]:
        """エポックごとの平均値"""
        sums: Dict[int, List[float]] = {}
        for record in self.history:
            sums.setdefault(record['epoch'], []).append(record[key])
        return [sum(values) / len(values) for _, values in sorted(sums.items())]


@performance_monitor("fit")
def fit(dataset: SyntheticDataset, cfg: TrainConfig, state: TrainState,
        output_dir: Optional[Path] = None, config: Optional[ConfigManager] = None) -> FitResult:
    """
    エポック × バッチの学習を実行

    state.epoch から cfg.epochs まで学習します（チェックポイントからの再開に対応）。
    エポックのシャッフル順は (shuffle_seed, epoch)、各バッチの拡張は
    (augment_seed, エポックシード, バッチ番号) だけで決まります。

    Args:
        dataset: 学習データ
        cfg: 学習設定
        state: 開始状態
        output_dir: 出力先（指定時はメトリクスログとチェックポイントを書き出し）
        config: チェックポイントに保存する解決済み設定

    Returns:
        最終状態と履歴
    """
    configure_determinism()
    metrics_log = MetricsLog(Path(output_dir) / "metrics.jsonl") if output_dir is not None else None
    history: List[Dict[str, Any]] = []
    checkpoints: List[Path] = []
    started = time.perf_counter()

    for epoch in range(state.epoch, cfg.epochs):
        epoch_seed = derive_seed(cfg.shuffle_seed, epoch)
        source = prefetch_batches if cfg.prefetch else iter_batches
        batches = source(dataset, cfg.batch_size, epoch_seed, cfg.crop_fraction, cfg.augment_seed)

        for batch in batches:
            step_started = time.perf_counter()
            state, breakdown = train_step(state, batch, cfg)
            record = {
                'epoch': epoch,
                'step': state.global_step - 1,
                **breakdown.to_dict(),
                **state.last_diagnostics.to_dict(),
                'wall_ms': (time.perf_counter() - step_started) * 1000.0
            }
            history.append(record)
            if metrics_log is not None:
                metrics_log.append(record)

        state.epoch = epoch + 1
        epoch_records = [r for r in history if r['epoch'] == epoch]
        if epoch_records:
            mean_total = sum(r['total'] for r in epoch_records) / len(epoch_records)
            logger.info(f"エポック {epoch + 1}/{cfg.epochs} 完了: 平均損失={mean_total:.6f}")

        if output_dir is not None and config is not None:
            if state.epoch % cfg.checkpoint_interval == 0 or state.epoch == cfg.epochs:
                path = Path(output_dir) / "checkpoints" / checkpoint_name(state.epoch)
                save_checkpoint(
                    path, state.model, state.velocity_arrays(), config, state.epoch, state.global_step,
                    metadata={'seeds': state.seeds, 'cumulative': state.cumulative}
                )
                checkpoints.append(path)

    return FitResult(state, history, checkpoints, time.perf_counter() - started)
