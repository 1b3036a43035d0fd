"""
チェックポイント

4つのパラメータ群、モーメンタムバッファ、学習位置、解決済み設定と
構成ハッシュをHDF5コンテナに保存します。
構成ハッシュが一致しないチェックポイントの読み込みは拒否します。
"""

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.data.array_store import read_arrays, write_arrays
from src.data.config_manager import ConfigManager
from src.model.model_bundle import ModelBundle
from src.utils.exceptions import CheckpointError, DataLoadException, DataSaveError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
PARAM_PREFIX = "param:"
VELOCITY_PREFIX = "velocity:"


@dataclass
class CheckpointData:
    """読み込んだチェックポイントの内容"""

    params: "OrderedDict[str, np.ndarray]"
    velocity: "OrderedDict[str, np.ndarray]"
    config: Dict[str, Any]
    model_hash: str
    epoch: int
    global_step: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def config_manager(self) -> ConfigManager:
        """保存されている解決済み設定から ConfigManager を復元"""
        return ConfigManager.from_dict(self.config)

    def build_model(self) -> ModelBundle:
        """保存されている設定でモデルを構築しパラメータを復元"""
        model = ModelBundle(self.config_manager().build_run_config().model)
        model.load_state_arrays(self.params)
        return model


def checkpoint_name(epoch: int) -> str:
    return f"epoch_{epoch:04d}.h5"


def save_checkpoint(path: Path, model: ModelBundle, velocity: Dict[str, np.ndarray],
                    config: ConfigManager, epoch: int, global_step: int,
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    チェックポイントを保存

    Args:
        path: 出力パス
        model: モデル
        velocity: パラメータ名 -> モーメンタムバッファ
        config: 解決済み設定
        epoch: 完了したエポック数
        global_step: 完了したステップ数
        metadata: 追加情報（累積メトリクスなど、JSON化可能な値）

    Returns:
        出力パス

    Raises:
        CheckpointError: 書き込み失敗
    """
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, value in model.state_arrays().items():
        arrays[PARAM_PREFIX + name] = value
    for name, value in velocity.items():
        arrays[VELOCITY_PREFIX + name] = np.asarray(value)

    attrs = {
        'kind': 'checkpoint',
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'model_hash': config.model_hash(),
        'config_json': json.dumps(config.to_dict(), sort_keys=True),
        'epoch': int(epoch),
        'global_step': int(global_step),
        'metadata_json': json.dumps(metadata or {}, sort_keys=True)
    }
    try:
        write_arrays(path, arrays, attrs)
    except DataSaveError as e:
        raise CheckpointError(f"チェックポイントの保存に失敗しました: {path}", cause=e)

    logger.info(f"チェックポイントを保存しました: {path} (epoch={epoch}, step={global_step})")
    return Path(path)


def load_checkpoint(path: Path, expected_hash: Optional[str] = None) -> CheckpointData:
    """
    チェックポイントを読み込み

    Args:
        path: チェックポイントのパス
        expected_hash: 期待する構成ハッシュ（Noneの場合は保存設定から再計算して照合）

    Returns:
        チェックポイントの内容

    Raises:
        CheckpointError: ファイル不在・破損・構成ハッシュ不一致
    """
    try:
        arrays, attrs = read_arrays(path)
    except DataLoadException as e:
        raise CheckpointError(f"チェックポイントを読み込めません: {path}", cause=e)

    if attrs.get('kind') != 'checkpoint':
        raise CheckpointError(f"チェックポイントではありません: {path}")
    if attrs.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"未対応のチェックポイント形式です: version={attrs.get('format_version')}")

    try:
        config = json.loads(attrs['config_json'])
        metadata = json.loads(attrs.get('metadata_json', '{}'))
        stored_hash = attrs['model_hash']
        recomputed = ConfigManager.from_dict(config).model_hash()
    except (KeyError, json.JSONDecodeError) as e:
        raise CheckpointError(f"チェックポイントのメタデータが壊れています: {path}", cause=e)

    if recomputed != stored_hash:
        raise CheckpointError(f"チェックポイントの構成ハッシュが保存設定と一致しません: {path}")
    if expected_hash is not None and expected_hash != stored_hash:
        raise CheckpointError(
            "チェックポイントの構成ハッシュが現在の設定と一致しません",
            details={"checkpoint": stored_hash, "expected": expected_hash}
        )

    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    velocity: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, value in arrays.items():
        if name.startswith(PARAM_PREFIX):
            params[name[len(PARAM_PREFIX):]] = value
        elif name.startswith(VELOCITY_PREFIX):
            velocity[name[len(VELOCITY_PREFIX):]] = value

    logger.info(f"チェックポイントを読み込みました: {path} (epoch={attrs['epoch']})")
    return CheckpointData(
        params=params,
        velocity=velocity,
        config=config,
        model_hash=stored_hash,
        epoch=int(attrs['epoch']),
        global_step=int(attrs['global_step']),
        metadata=metadata
    )
