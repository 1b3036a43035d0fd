"""
学習パイプラインの統合テスト

データ生成 → 学習 → チェックポイント → 評価の一連の流れと、
再開・再実行での再現性を検証します。
"""

import json

import numpy as np
import pytest

from src.data.array_store import load_dataset, read_arrays
from src.data.config_manager import ConfigManager
from src.data.synthetic_dataset import generate_splits
from src.model.checkpoint import checkpoint_name, load_checkpoint
from src.training.experiment import (
    METRIC_COLUMNS, RESOLVED_CONFIG_NAME, dataset_fingerprint, run_ablation, run_cluster_sweep, run_training
)
from src.utils.metrics_log import MetricsLog

pytestmark = pytest.mark.integration


def _copy(config: ConfigManager, **overrides) -> ConfigManager:
    copied = ConfigManager.from_dict(config.to_dict())
    for key, value in overrides.items():
        copied.set(key, value)
    return copied


def _checkpoint_arrays(path):
    arrays, _ = read_arrays(path)
    return arrays


class TestRunTraining:
    """run_training の統合テスト"""

    def test_outputs(self, tmp_path, small_config_manager):
        outcome = run_training(small_config_manager, tmp_path / "run")
        out = tmp_path / "run"

        assert (out / RESOLVED_CONFIG_NAME).exists()
        assert (out / "eval_report.json").exists()
        assert (out / "checkpoints" / checkpoint_name(1)).exists()
        assert (out / "checkpoints" / checkpoint_name(2)).exists()
        assert len(outcome.fit_result.checkpoints) == 2

        records = MetricsLog(out / "metrics.jsonl").read()
        assert len([r for r in records if 'kind' not in r]) == 12
        assert records[-1]['kind'] == 'eval'
        assert outcome.report.num_queries == 24
        assert sorted(outcome.report.recall_at) == [1, 2, 4]
        assert len(outcome.dataset_sha256) == 64

        with open(out / "eval_report.json", encoding='utf-8') as file:
            assert json.load(file) == outcome.report.to_dict()

    def test_checkpoint_contents(self, tmp_path, small_config_manager):
        run_training(small_config_manager, tmp_path)
        data = load_checkpoint(tmp_path / "checkpoints" / checkpoint_name(2),
                               expected_hash=small_config_manager.model_hash())
        assert data.epoch == 2
        assert data.global_step == 12
        assert set(data.params) == set(data.velocity)
        assert data.metadata['cumulative']['steps'] == 12
        assert data.metadata['seeds'] == {'dataset': 0, 'init': 0, 'shuffle': 0, 'augment': 0}

    def test_zero_epochs(self, tmp_path, small_config_manager):
        """エポック0では学習せず、初期モデルを評価する"""
        outcome = run_training(_copy(small_config_manager, **{"training.epochs": 0}), tmp_path)
        assert outcome.fit_result.history == []
        assert outcome.fit_result.checkpoints == []
        assert outcome.report.num_queries == 24

    def test_two_runs_identical(self, tmp_path, small_config_manager):
        """同じ設定の2回の実行は wall_ms 以外ビット一致"""
        run_training(small_config_manager, tmp_path / "a")
        run_training(small_config_manager, tmp_path / "b")

        first = MetricsLog(tmp_path / "a" / "metrics.jsonl").records_without('wall_ms')
        second = MetricsLog(tmp_path / "b" / "metrics.jsonl").records_without('wall_ms')
        assert first == second

        for epoch in (1, 2):
            a = _checkpoint_arrays(tmp_path / "a" / "checkpoints" / checkpoint_name(epoch))
            b = _checkpoint_arrays(tmp_path / "b" / "checkpoints" / checkpoint_name(epoch))
            assert list(a) == list(b)
            for name in a:
                np.testing.assert_array_equal(a[name], b[name])

    def test_resume_matches_uninterrupted(self, tmp_path, small_config_manager):
        """1エポック後のチェックポイントから再開すると中断なしの学習と一致"""
        run_training(small_config_manager, tmp_path / "full")
        run_training(_copy(small_config_manager, **{"training.epochs": 1}), tmp_path / "half")
        run_training(small_config_manager, tmp_path / "resumed",
                     resume_checkpoint=tmp_path / "half" / "checkpoints" / checkpoint_name(1))

        full = _checkpoint_arrays(tmp_path / "full" / "checkpoints" / checkpoint_name(2))
        resumed = _checkpoint_arrays(tmp_path / "resumed" / "checkpoints" / checkpoint_name(2))
        for name in full:
            np.testing.assert_array_equal(full[name], resumed[name])

        full_steps = MetricsLog(tmp_path / "full" / "metrics.jsonl").records_without('wall_ms')
        resumed_steps = MetricsLog(tmp_path / "resumed" / "metrics.jsonl").records_without('wall_ms')
        assert [r for r in full_steps if r.get('epoch') == 1 and 'kind' not in r] == \
            [r for r in resumed_steps if 'kind' not in r]

    def test_rerun_into_same_directory(self, tmp_path, small_config_manager):
        """同じ出力先への再実行でもメトリクスログは1回分"""
        run_training(small_config_manager, tmp_path / "once")
        run_training(small_config_manager, tmp_path / "twice")
        run_training(small_config_manager, tmp_path / "twice")

        once = MetricsLog(tmp_path / "once" / "metrics.jsonl").records_without('wall_ms')
        twice = MetricsLog(tmp_path / "twice" / "metrics.jsonl").records_without('wall_ms')
        assert len(twice) == 13
        assert twice == once

    def test_resume_in_place_matches_uninterrupted(self, tmp_path, small_config_manager):
        """同じ出力先で1エポック目から再開しても、ログは中断なしの学習と一致"""
        run_training(small_config_manager, tmp_path / "full")
        run_training(small_config_manager, tmp_path / "inplace")
        run_training(small_config_manager, tmp_path / "inplace",
                     resume_checkpoint=tmp_path / "inplace" / "checkpoints" / checkpoint_name(1))

        full = MetricsLog(tmp_path / "full" / "metrics.jsonl").records_without('wall_ms')
        inplace = MetricsLog(tmp_path / "inplace" / "metrics.jsonl").records_without('wall_ms')
        assert inplace == full

    def test_exported_datasets(self, tmp_path, small_config_manager):
        """学習・テストデータが出力先に保存され、読み戻すと生成結果と一致"""
        outcome = run_training(small_config_manager, tmp_path)
        run_config = small_config_manager.build_run_config()
        train_set, test_set = generate_splits(run_config.dataset, run_config.dataset_seed)

        train_copy = load_dataset(tmp_path / "data" / "train.h5")
        test_copy = load_dataset(tmp_path / "data" / "test.h5")
        assert dataset_fingerprint(train_copy) == outcome.dataset_sha256 == dataset_fingerprint(train_set)
        assert dataset_fingerprint(test_copy) == dataset_fingerprint(test_set)
        assert test_copy.classes == test_set.classes
        assert (tmp_path / "data" / "test.json").exists()

    def test_resolved_config_reloads(self, tmp_path, small_config_manager):
        run_training(small_config_manager, tmp_path)
        restored = ConfigManager(tmp_path / RESOLVED_CONFIG_NAME)
        assert restored.to_dict() == small_config_manager.to_dict()


class TestComparisons:
    """アブレーションとクラスタ数掃引"""

    def test_ablation_table(self, tmp_path, small_config_manager):
        config = _copy(small_config_manager, **{"training.epochs": 1})
        table = run_ablation(config, tmp_path)

        assert [row['name'] for row in table.rows] == ["only_rim", "cbs", "cbswr"]
        for row in table.rows:
            assert list(row['metrics']) == list(METRIC_COLUMNS)
            # recall_ks = [1, 2, 4] なので R@8 は欠損
            assert row['metrics']['R@8'] is None
        # 3モードとも同じ学習データ
        assert len({row['dataset_sha256'] for row in table.rows}) == 1

        text_path, json_path = table.write(tmp_path, "ablation_table")
        rendered = text_path.read_text(encoding='utf-8').splitlines()
        assert len(rendered) == 2 + 3
        with open(json_path, encoding='utf-8') as file:
            assert json.load(file)['columns'] == list(METRIC_COLUMNS)

    def test_cluster_sweep(self, tmp_path, small_config_manager):
        config = _copy(small_config_manager, **{"training.epochs": 1})
        table = run_cluster_sweep(config, tmp_path, [2, 4])
        assert [row['name'] for row in table.rows] == ["2", "4"]
        assert (tmp_path / "k_2" / "eval_report.json").exists()
