"""
チェックポイントの単体テスト
"""

import numpy as np
import pytest

from src.data.array_store import write_arrays
from src.model.checkpoint import checkpoint_name, load_checkpoint, save_checkpoint
from src.model.model_bundle import ModelBundle
from src.utils.exceptions import CheckpointError


@pytest.fixture
def model(small_config_manager):
    return ModelBundle.from_config(small_config_manager.build_run_config().model)


@pytest.fixture
def velocity(model):
    return {name: np.full(param.shape, 0.25) for name, param in model.ordered_parameters()}


class TestCheckpoint:
    """チェックポイントの保存と読み込み"""

    def test_checkpoint_name(self):
        assert checkpoint_name(3) == "epoch_0003.h5"

    def test_round_trip(self, tmp_path, model, velocity, small_config_manager):
        path = save_checkpoint(tmp_path / checkpoint_name(2), model, velocity, small_config_manager,
                               epoch=2, global_step=12, metadata={'cumulative_ms': 5.0})
        data = load_checkpoint(path)

        assert data.epoch == 2
        assert data.global_step == 12
        assert data.metadata == {'cumulative_ms': 5.0}
        assert data.model_hash == small_config_manager.model_hash()
        assert data.config == small_config_manager.to_dict()
        assert list(data.params) == [name for name, _ in model.ordered_parameters()]
        for name, value in model.state_arrays().items():
            np.testing.assert_array_equal(data.params[name], value)
            np.testing.assert_array_equal(data.velocity[name], velocity[name])

    def test_build_model(self, tmp_path, model, velocity, small_config_manager):
        path = save_checkpoint(tmp_path / "ckpt.h5", model, velocity, small_config_manager, 1, 6)
        restored = load_checkpoint(path).build_model()
        for name, value in model.state_arrays().items():
            np.testing.assert_array_equal(restored.state_arrays()[name], value)

    def test_expected_hash_mismatch(self, tmp_path, model, velocity, small_config_manager):
        """構成ハッシュが異なるチェックポイントは拒否"""
        path = save_checkpoint(tmp_path / "ckpt.h5", model, velocity, small_config_manager, 1, 6)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, expected_hash="0" * 16)
        assert load_checkpoint(path, expected_hash=small_config_manager.model_hash()).epoch == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.h5")

    def test_not_a_checkpoint(self, tmp_path):
        path = write_arrays(tmp_path / "other.h5", {'x': np.zeros(2)}, attrs={'kind': 'dataset'})
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_tampered_hash(self, tmp_path, model, velocity, small_config_manager):
        """保存設定と構成ハッシュが食い違うファイルは拒否"""
        import h5py

        path = save_checkpoint(tmp_path / "ckpt.h5", model, velocity, small_config_manager, 1, 6)
        with h5py.File(path, 'a') as file:
            file.attrs['model_hash'] = "tampered"
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
