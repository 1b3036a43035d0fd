"""
テスト共通設定とフィクスチャ定義

テストは 8x8 の小さな画像・小さなネットワークで行い、
各テストが数秒以内に終わるようにしています。
"""

import json

import numpy as np
import pytest
import torch

from src.data.batching import make_batches
from src.data.config_manager import ConfigManager
from src.data.synthetic_dataset import generate_splits
from src.domain.run_config import DatasetConfig, ModelConfig, RimConfig, TrainConfig
from src.model.model_bundle import ModelBundle


# 小規模設定（ConfigManager のドット記法キー）
SMALL_OVERRIDES = {
    "dataset.num_classes": 3,
    "dataset.num_test_classes": 3,
    "dataset.samples_per_class": 8,
    "dataset.image_shape": [1, 8, 8],
    "model.representation_dim": 16,
    "model.embedding_dim": 8,
    "model.encoder_channels": [4, 8],
    "clustering.num_clusters": 4,
    "training.epochs": 2,
    "training.batch_size": 4,
    "training.checkpoint_interval": 1,
    "gradcheck.num_batches": 1,
    "gradcheck.batch_size": 4,
    "gradcheck.num_clusters": 4,
    "gradcheck.max_coords_per_group": 6,
    "evaluation.recall_ks": [1, 2, 4],
}


@pytest.fixture
def small_dataset_config():
    """8x8画像・3クラスの小さなデータセット設定"""
    return DatasetConfig(num_classes=3, num_test_classes=3, samples_per_class=8, image_shape=(1, 8, 8))


@pytest.fixture
def small_model_config():
    """小さなネットワーク構成（K=4）"""
    return ModelConfig(
        image_shape=(1, 8, 8),
        representation_dim=16,
        embedding_dim=8,
        num_clusters=4,
        encoder_channels=(4, 8),
        init_seed=0
    )


@pytest.fixture
def small_train_config():
    """小さな学習設定（b=4, m=8, K=4）"""
    return TrainConfig(epochs=2, batch_size=4, checkpoint_interval=1, rim=RimConfig(num_clusters=4))


@pytest.fixture
def small_splits(small_dataset_config):
    """(学習, テスト) データ"""
    return generate_splits(small_dataset_config, seed=0)


@pytest.fixture
def small_train_set(small_splits):
    return small_splits[0]


@pytest.fixture
def small_test_set(small_splits):
    return small_splits[1]


@pytest.fixture
def small_model(small_model_config):
    """シード付き初期化済みの float64 モデル"""
    return ModelBundle.from_config(small_model_config)


@pytest.fixture
def small_batch(small_train_set):
    """m=8 の学習バッチ"""
    return make_batches(small_train_set, batch_size=4, epoch_seed=0)[0]


@pytest.fixture
def small_config_manager(tmp_path):
    """小規模設定を適用した ConfigManager（出力先は一時ディレクトリ）"""
    config = ConfigManager()
    for key, value in SMALL_OVERRIDES.items():
        config.set(key, value)
    config.set("run.output_dir", str(tmp_path / "run"))
    return config


@pytest.fixture
def small_config_file(tmp_path):
    """小規模設定のJSONファイル（ドット記法のフラット形式）"""
    path = tmp_path / "small_config.json"
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(SMALL_OVERRIDES, f, indent=2)
    return path


@pytest.fixture(autouse=True)
def isolate_output_root(monkeypatch):
    """環境変数による出力先の上書きをテストに持ち込まない"""
    monkeypatch.delenv("CENTROIDDML_OUTPUT_ROOT", raising=False)


# カスタムマッチャー
class ApproximatelyEqual:
    """浮動小数点数の近似比較用クラス"""

    def __init__(self, expected, tolerance=1e-10):
        self.expected = expected
        self.tolerance = tolerance

    def __eq__(self, actual):
        if isinstance(actual, torch.Tensor):
            actual = actual.detach().numpy()
        if isinstance(self.expected, (list, tuple, np.ndarray)):
            return np.allclose(actual, self.expected, atol=self.tolerance, rtol=0.0)
        return abs(float(actual) - self.expected) <= self.tolerance

    def __repr__(self):
        return f"approximately {self.expected} (±{self.tolerance})"


@pytest.fixture
def approx():
    """近似比較のためのヘルパー"""
    return ApproximatelyEqual


def pytest_collection_modifyitems(config, items):
    """テスト収集時の修正処理"""
    for item in items:
        if "tests/performance" in item.nodeid.replace("\\", "/"):
            item.add_marker(pytest.mark.performance)
