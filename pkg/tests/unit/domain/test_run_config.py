"""
実行設定データクラスの単体テスト
"""

import pytest
import torch

from src.domain.loss_breakdown import AblationMode
from src.domain.run_config import (
    DatasetConfig, GradCheckConfig, ModelConfig, RimConfig, RunConfig, TrainConfig
)
from src.utils.exceptions import ConfigurationError


class TestDatasetConfig:
    """DatasetConfigのテスト"""

    def test_train_and_test_classes_disjoint(self):
        cfg = DatasetConfig(num_classes=4, num_test_classes=3)
        assert cfg.train_classes == (0, 1, 2, 3)
        assert cfg.test_classes == (4, 5, 6)
        assert not set(cfg.train_classes) & set(cfg.test_classes)

    def test_image_shape_normalized_to_tuple(self):
        assert DatasetConfig(image_shape=[1, 8, 8]).image_shape == (1, 8, 8)

    @pytest.mark.parametrize("kwargs,key", [
        ({"num_classes": 0}, "dataset.num_classes"),
        ({"samples_per_class": 1}, "dataset.samples_per_class"),
        ({"image_shape": (8, 8)}, "dataset.image_shape"),
        ({"noise_level": 1.0}, "dataset.noise_level"),
        ({"crop_fraction": 0.0}, "dataset.crop_fraction"),
        ({"crop_fraction": 1.2}, "dataset.crop_fraction"),
    ])
    def test_invalid_values_name_key(self, kwargs, key):
        with pytest.raises(ConfigurationError) as exc_info:
            DatasetConfig(**kwargs)
        assert exc_info.value.key == key


class TestModelConfig:
    """ModelConfigのテスト"""

    def test_torch_dtype(self):
        assert ModelConfig().torch_dtype == torch.float64
        assert ModelConfig(dtype="float32").torch_dtype == torch.float32

    def test_spatial_size_multiple_of_four(self):
        with pytest.raises(ConfigurationError) as exc_info:
            ModelConfig(image_shape=(1, 10, 10))
        assert exc_info.value.key == "dataset.image_shape"

    def test_unknown_dtype(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(dtype="float16")


class TestTrainConfig:
    """TrainConfigのテスト"""

    def test_batch_m(self):
        assert TrainConfig(batch_size=16).batch_m == 32

    def test_default_k_fits_default_batch(self):
        """既定の K=32 は m=32 に収まる"""
        cfg = TrainConfig()
        assert cfg.rim.num_clusters <= cfg.batch_m

    def test_k_larger_than_m_rejected(self):
        with pytest.raises(ConfigurationError) as exc_info:
            TrainConfig(batch_size=2, rim=RimConfig(num_clusters=5))
        assert exc_info.value.key == "clustering.num_clusters"

    def test_effective_weights_follow_mode(self):
        cfg = TrainConfig(ablation_mode=AblationMode.ONLY_RIM, rim=RimConfig(num_clusters=4))
        assert cfg.effective_weights.alpha == 0.0
        assert cfg.effective_weights.gamma == 0.0

    @pytest.mark.parametrize("kwargs,key", [
        ({"momentum": 1.0}, "training.momentum"),
        ({"checkpoint_interval": 0}, "training.checkpoint_interval"),
        ({"ablation_mode": "full"}, "training.ablation_mode"),
        ({"epochs": -1}, "training.epochs"),
    ])
    def test_invalid_values_name_key(self, kwargs, key):
        with pytest.raises(ConfigurationError) as exc_info:
            TrainConfig(**kwargs)
        assert exc_info.value.key == key


class TestRimAndGradCheckConfig:
    """RimConfig / GradCheckConfigのテスト"""

    def test_rim_defaults(self):
        rim = RimConfig()
        assert (rim.num_clusters, rim.entropy_weight) == (32, 1.0)

    def test_rim_entropy_weight_positive(self):
        with pytest.raises(ConfigurationError):
            RimConfig(entropy_weight=0.0)

    def test_gradcheck_cluster_bound(self):
        with pytest.raises(ConfigurationError) as exc_info:
            GradCheckConfig(batch_size=2, num_clusters=5)
        assert exc_info.value.key == "gradcheck.num_clusters"


class TestRunConfig:
    """RunConfigのテスト"""

    def _build(self, **kwargs):
        base = dict(
            name="t", output_dir="out",
            dataset=DatasetConfig(), model=ModelConfig(), train=TrainConfig(), gradcheck=GradCheckConfig()
        )
        base.update(kwargs)
        return RunConfig(**base)

    def test_recall_ks_tuple(self):
        assert self._build(recall_ks=[1, 2]).recall_ks == (1, 2)

    def test_image_shape_must_agree(self):
        with pytest.raises(ConfigurationError) as exc_info:
            self._build(model=ModelConfig(image_shape=(1, 8, 8)))
        assert exc_info.value.key == "dataset.image_shape"

    def test_recall_ks_positive(self):
        with pytest.raises(ConfigurationError):
            self._build(recall_ks=[0])
