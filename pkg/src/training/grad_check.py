"""
有限差分による勾配検査

自動微分で得た勾配を中心差分と比較し、パラメータ群ごとの
相対誤差を報告します。ハード割り当ては基準点で固定します。

群の相対誤差は max_i |解析_i - 差分_i| / max(max_i |解析_i|, max_i |差分_i|, 1e-8) です。
分母は座標ごとではなく群内の最大値なので、勾配が0に近い座標の
小さな絶対誤差では不合格になりません。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import torch
from torch import nn

from src.data.batching import make_batches
from src.data.synthetic_dataset import generate_dataset
from src.domain.image_sample import Batch
from src.domain.run_config import GradCheckConfig, RunConfig, TrainConfig
from src.losses.clustering import assign
from src.losses.metric_losses import weighted_total
from src.model.model_bundle import ModelBundle
from src.training.trainer import forward_losses
from src.utils.exceptions import ConfigurationError
from src.utils.logging_config import performance_monitor

logger = logging.getLogger(__name__)

LOSS_NAMES = ("l_rim", "l_rec", "l_m", "total")

# 相対誤差の分母の下限
RELATIVE_ERROR_FLOOR = 1e-8


@dataclass
class GroupReport:
    """1パラメータ群の検査結果"""

    group: str
    relative_error: float
    max_abs_error: float
    max_analytic: float
    max_numeric: float
    coords_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.relative_error <= self.tolerance

    def to_dict(self) -> Dict[str, float]:
        return {
            'group': self.group,
            'relative_error': self.relative_error,
            'max_abs_error': self.max_abs_error,
            'coords_checked': self.coords_checked,
            'passed': self.passed
        }


@dataclass
class GradCheckReport:
    """1つの損失に対する検査結果"""

    loss_name: str
    groups: Dict[str, GroupReport] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.groups.values())

    @property
    def worst_relative_error(self) -> float:
        return max((report.relative_error for report in self.groups.values()), default=0.0)

    def failed_groups(self) -> List[str]:
        return [name for name, report in self.groups.items() if not report.passed]

    def to_dict(self) -> Dict[str, object]:
        return {
            'loss': self.loss_name,
            'passed': self.passed,
            'worst_relative_error': self.worst_relative_error,
            'groups': [report.to_dict() for report in self.groups.values()]
        }


def _coordinates(params: Mapping[str, nn.Parameter], limit: int,
                 generator: torch.Generator) -> List[Tuple[nn.Parameter, int]]:
    """検査する (パラメータ, 平坦化インデックス) の一覧。多すぎる場合は無作為抽出"""
    coords = [(param, index) for param in params.values() for index in range(param.numel())]
    if len(coords) <= limit:
        return coords
    chosen = torch.randperm(len(coords), generator=generator)[:limit].sort().values
    return [coords[int(i)] for i in chosen]


def check_gradients(loss_fn: Callable[[], torch.Tensor],
                    parameter_groups: Mapping[str, Mapping[str, nn.Parameter]],
                    step: float = 1e-5, tolerance: float = 1e-4, max_coords_per_group: int = 24,
                    seed: int = 0, loss_name: str = "loss") -> GradCheckReport:
    """
    解析的勾配と中心差分を比較

    解析的勾配は loss_fn().backward() 後の param.grad から取得します
    （backward中のフックによる改変もそのまま検査対象になります）。

    群ごとの相対誤差は、検査した座標での差の最大絶対値を、同じ座標での
    解析的勾配・数値勾配の最大絶対値（下限 RELATIVE_ERROR_FLOOR）で割った値です。
    座標ごとの相対誤差の最大値ではありません。

    Args:
        loss_fn: 現在のパラメータでスカラー損失を返す関数
        parameter_groups: 群名 -> (名前 -> パラメータ)
        step: 差分幅
        tolerance: 許容相対誤差（上記の群単位の定義）
        max_coords_per_group: 群あたりの検査座標数の上限
        seed: 座標抽出のシード
        loss_name: 報告用の損失名

    Returns:
        群ごとの検査結果
    """
    all_params = [p for params in parameter_groups.values() for p in params.values()]
    for param in all_params:
        param.grad = None
    loss_fn().backward()
    analytic = {id(p): (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
                for p in all_params}

    generator = torch.Generator().manual_seed(seed)
    report = GradCheckReport(loss_name)
    for group, params in parameter_groups.items():
        analytic_values: List[float] = []
        numeric_values: List[float] = []
        with torch.no_grad():
            for param, index in _coordinates(params, max_coords_per_group, generator):
                flat = param.data.view(-1)
                original = flat[index].item()
                flat[index] = original + step
                upper = loss_fn().item()
                flat[index] = original - step
                lower = loss_fn().item()
                flat[index] = original
                numeric_values.append((upper - lower) / (2.0 * step))
                analytic_values.append(analytic[id(param)].view(-1)[index].item())

        a = torch.tensor(analytic_values, dtype=torch.float64)
        n = torch.tensor(numeric_values, dtype=torch.float64)
        if a.numel() == 0:
            continue
        max_abs_error = float((a - n).abs().max())
        max_analytic = float(a.abs().max())
        max_numeric = float(n.abs().max())
        scale = max(max_analytic, max_numeric, RELATIVE_ERROR_FLOOR)
        report.groups[group] = GroupReport(
            group=group,
            relative_error=max_abs_error / scale,
            max_abs_error=max_abs_error,
            max_analytic=max_analytic,
            max_numeric=max_numeric,
            coords_checked=int(a.numel()),
            tolerance=tolerance
        )

    for param in all_params:
        param.grad = None
    return report


def fixed_assignments(model: ModelBundle, images: torch.Tensor) -> torch.Tensor:
    """
    基準点でのハード割り当て

    アクティブなクラスタが2つ未満だとメトリック損失が0になり検査にならないため、
    その場合はラウンドロビンの割り当てを使います（割り当ては定数なので勾配の定義は変わりません）。
    """
    with torch.no_grad():
        _, _, logits = model(images)
        assignments = assign(torch.softmax(logits, dim=1))
    if assignments.unique().numel() < 2 and model.num_clusters >= 2:
        assignments = torch.arange(images.shape[0]) % model.num_clusters
    return assignments


def grad_check(loss_selector: str, model: ModelBundle, batch: Batch, cfg: TrainConfig,
               step: float = 1e-5, tolerance: float = 1e-4, max_coords_per_group: int = 24,
               seed: int = 0, groups: Optional[Sequence[str]] = None) -> GradCheckReport:
    """
    選択した損失について全パラメータ群の勾配を検査

    相対誤差の定義は check_gradients と同じく群内の最大勾配で正規化した値です。

    Args:
        loss_selector: "l_rim" / "l_rec" / "l_m" / "total"
        model: float64 のモデル
        batch: 検査に使うバッチ
        cfg: 学習設定（損失の重み・温度・RIM設定）
        groups: 検査する群名（Noneの場合は全群）

    Raises:
        ConfigurationError: 損失名が不正、またはモデルが float64 でない場合
    """
    if loss_selector not in LOSS_NAMES:
        raise ConfigurationError(f"不明な損失名です: {loss_selector}（{LOSS_NAMES} のいずれか）",
                                 key="gradcheck.loss")
    if model.dtype != torch.float64:
        raise ConfigurationError("勾配検査は float64 のモデルで行う必要があります", key="model.dtype")

    images = batch.to_tensor(torch.float64, expected_shape=model.config.image_shape)
    twin_index = batch.twin_index()
    assignments = fixed_assignments(model, images)
    weights = cfg.effective_weights

    def loss_fn() -> torch.Tensor:
        result = forward_losses(model, images, twin_index, cfg, assignments=assignments)
        if loss_selector == "total":
            return weighted_total(result.l_m, result.l_rim, result.l_rec, weights)
        return result.component(loss_selector)

    parameter_groups = model.parameter_groups()
    if groups is not None:
        parameter_groups = {name: parameter_groups[name] for name in groups}

    report = check_gradients(loss_fn, parameter_groups, step, tolerance, max_coords_per_group, seed,
                             loss_name=loss_selector)
    logger.debug(f"勾配検査 {loss_selector}: 最大相対誤差={report.worst_relative_error:.3e}")
    return report


@performance_monitor("gradcheck_suite")
def run_gradcheck_suite(run_config: RunConfig) -> List[GradCheckReport]:
    """
    既定の勾配検査スイート

    小さなクラスタ数とバッチで float64 モデルを作り、
    num_batches 個のバッチそれぞれで全損失を検査します。
    """
    gc: GradCheckConfig = run_config.gradcheck
    model = ModelBundle.from_config(
        replace(run_config.model, num_clusters=gc.num_clusters, dtype="float64", init_seed=gc.seed)
    )
    train_cfg = TrainConfig(
        batch_size=gc.batch_size,
        loss_weights=run_config.train.loss_weights,
        rim=replace(run_config.train.rim, num_clusters=gc.num_clusters),
        include_positive_in_denominator=run_config.train.include_positive_in_denominator,
        detach_centroid_denominator=run_config.train.detach_centroid_denominator
    )

    dataset = generate_dataset(run_config.dataset, run_config.dataset_seed)
    batches = make_batches(dataset, gc.batch_size, epoch_seed=gc.seed,
                           crop_fraction=run_config.train.crop_fraction)[:gc.num_batches]
    if len(batches) < gc.num_batches:
        logger.warning(f"勾配検査用のバッチが {len(batches)} 個しか作れません（要求 {gc.num_batches}）")

    reports = []
    for batch_index, batch in enumerate(batches):
        for loss_name in LOSS_NAMES:
            report = grad_check(loss_name, model, batch, train_cfg, gc.step, gc.tolerance,
                                gc.max_coords_per_group, seed=gc.seed + batch_index)
            reports.append(report)
            if not report.passed:
                logger.error(f"勾配検査失敗: batch={batch_index}, loss={loss_name}, "
                             f"groups={report.failed_groups()}")
    return reports
