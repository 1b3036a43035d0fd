"""
実験の実行単位

設定からデータ生成・モデル初期化・学習・評価までの1回の実行と、
アブレーション（損失項の組み合わせ）およびクラスタ数の掃引をまとめます。
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.data.array_store import save_dataset
from src.data.config_manager import ConfigManager
from src.data.synthetic_dataset import SyntheticDataset, generate_splits
from src.domain.eval_report import EvalReport
from src.domain.loss_breakdown import AblationMode
from src.evaluation.retrieval import evaluate
from src.model.checkpoint import load_checkpoint
from src.model.model_bundle import ModelBundle
from src.training.trainer import FitResult, TrainState, fit
from src.utils.metrics_log import MetricsLog

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.json"
METRICS_LOG_NAME = "metrics.jsonl"
DATA_DIR_NAME = "data"
METRIC_COLUMNS = ("NMI", "R@1", "R@2", "R@4", "R@8")


def dataset_fingerprint(dataset: SyntheticDataset) -> str:
    """データセットの画素とラベルのSHA-256"""
    digest = hashlib.sha256()
    digest.update(dataset.images.tobytes())
    digest.update(dataset.labels.tobytes())
    return digest.hexdigest()


@dataclass
class RunOutcome:
    """1回の学習・評価の結果"""

    name: str
    fit_result: FitResult
    report: EvalReport
    output_dir: Path
    dataset_sha256: str

    def table_row(self) -> Dict[str, Any]:
        row = self.report.summary_row()
        return {
            'name': self.name,
            'metrics': {column: row.get(column) for column in METRIC_COLUMNS},
            'train_seconds': self.fit_result.train_seconds,
            'dataset_sha256': self.dataset_sha256
        }


def run_training(config: ConfigManager, output_dir: Path, resume_checkpoint: Optional[Path] = None,
                 splits: Optional[Tuple[SyntheticDataset, SyntheticDataset]] = None,
                 name: Optional[str] = None) -> RunOutcome:
    """
    1回分の学習と評価

    解決済み設定と学習・テストデータ（data/train.h5, data/test.h5）を保存し、
    学習（チェックポイント・メトリクスログ出力）のあとテストクラスで評価して
    結果をメトリクスログに追記します。

    メトリクスログは新規の実行では空にし、再開時は再開エポック以降の記録を
    取り除いてから書き足すため、同じ出力先への再実行でも1回分の記録になります。

    Args:
        config: 解決済み設定
        output_dir: 出力ディレクトリ
        resume_checkpoint: 再開するチェックポイント
        splits: 共有する (学習, テスト) データ（Noneの場合は設定から生成）
        name: 結果表での名前

    Returns:
        実行結果
    """
    run_config = config.build_run_config()
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    config.save_resolved(output_dir / RESOLVED_CONFIG_NAME)

    train_set, test_set = splits if splits is not None else generate_splits(run_config.dataset,
                                                                             run_config.dataset_seed)
    save_dataset(train_set, output_dir / DATA_DIR_NAME / "train.h5")
    save_dataset(test_set, output_dir / DATA_DIR_NAME / "test.h5")
    seeds = {
        'dataset': run_config.dataset_seed,
        'init': run_config.model.init_seed,
        'shuffle': run_config.train.shuffle_seed,
        'augment': run_config.train.augment_seed
    }

    metrics_log = MetricsLog(output_dir / METRICS_LOG_NAME)
    if resume_checkpoint is not None:
        data = load_checkpoint(resume_checkpoint, expected_hash=config.model_hash())
        state = TrainState.from_checkpoint(data, ModelBundle(run_config.model))
        removed = metrics_log.truncate_to_epoch(state.epoch)
        logger.info(f"チェックポイントから再開します: {resume_checkpoint} (epoch={state.epoch}, "
                    f"削除したメトリクス記録={removed})")
    else:
        state = TrainState.initial(ModelBundle.from_config(run_config.model), seeds)
        metrics_log.reset()

    result = fit(train_set, run_config.train, state, output_dir=output_dir, config=config)
    report = evaluate(result.state.model, test_set, run_config.recall_ks, run_config.dataset.crop_fraction)

    metrics_log.append({'kind': 'eval', 'epoch': result.state.epoch, **report.to_dict()})
    with open(output_dir / "eval_report.json", 'w', encoding='utf-8') as file:
        json.dump(report.to_dict(), file, ensure_ascii=False, indent=2, sort_keys=True)

    return RunOutcome(name or run_config.name, result, report, output_dir, dataset_fingerprint(train_set))


@dataclass
class ComparisonTable:
    """比較表（行 = モードまたはK、列 = NMI, R@1, R@2, R@4, R@8）"""

    row_label: str
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'row_label': self.row_label, 'columns': list(METRIC_COLUMNS), 'rows': self.rows}

    def render(self) -> str:
        """人が読むための固定幅テキスト"""
        header = f"{self.row_label:<10}" + "".join(f"{c:>9}" for c in METRIC_COLUMNS) + f"{'train_s':>10}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            cells = "".join(
                f"{row['metrics'][c]:>9.4f}" if row['metrics'][c] is not None else f"{'-':>9}"
                for c in METRIC_COLUMNS
            )
            lines.append(f"{str(row['name']):<10}{cells}{row['train_seconds']:>10.2f}")
        return "\n".join(lines) + "\n"

    def write(self, directory: Path, stem: str) -> List[Path]:
        """テキストとJSONの両方で書き出し"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        text_path = directory / f"{stem}.txt"
        json_path = directory / f"{stem}.json"
        text_path.write_text(self.render(), encoding='utf-8')
        with open(json_path, 'w', encoding='utf-8') as file:
            json.dump(self.to_dict(), file, ensure_ascii=False, indent=2, sort_keys=True)
        return [text_path, json_path]


def run_ablation(config: ConfigManager, output_dir: Path,
                 modes: Sequence[str] = AblationMode.ALL) -> ComparisonTable:
    """
    損失項の組み合わせごとに同じシード・同じデータで学習して比較

    Returns:
        行 = モードの比較表
    """
    run_config = config.build_run_config()
    splits = generate_splits(run_config.dataset, run_config.dataset_seed)
    table = ComparisonTable(row_label="mode")
    for mode in modes:
        mode_config = ConfigManager.from_dict(config.to_dict())
        mode_config.set("training.ablation_mode", mode)
        mode_config.set("run.name", mode)
        outcome = run_training(mode_config, Path(output_dir) / mode, splits=splits, name=mode)
        table.rows.append(outcome.table_row())
        logger.info(f"アブレーション {mode}: R@1={outcome.report.recall_at.get(1)}, NMI={outcome.report.nmi:.4f}")
    return table


def run_cluster_sweep(config: ConfigManager, output_dir: Path, cluster_counts: Sequence[int]) -> ComparisonTable:
    """
    完全版の損失でクラスタ数 K を変えて比較

    Returns:
        行 = K の比較表
    """
    run_config = config.build_run_config()
    splits = generate_splits(run_config.dataset, run_config.dataset_seed)
    table = ComparisonTable(row_label="K")
    for k in cluster_counts:
        k_config = ConfigManager.from_dict(config.to_dict())
        k_config.set("training.ablation_mode", AblationMode.CBSWR)
        k_config.set("clustering.num_clusters", int(k))
        k_config.set("run.name", f"k{k}")
        outcome = run_training(k_config, Path(output_dir) / f"k_{k}", splits=splits, name=str(k))
        table.rows.append(outcome.table_row())
    return table
