"""
配列コンテナ

データセット、埋め込み、チェックポイントをHDF5ファイルに保存し、
形状・クラスID・シードなどをJSONマニフェストに書き出します。
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import h5py
import numpy as np

from src.data.synthetic_dataset import SyntheticDataset
from src.domain.eval_report import EmbeddingIndex
from src.domain.run_config import DatasetConfig
from src.utils.exceptions import DataLoadException, DataSaveError

logger = logging.getLogger(__name__)

CONTAINER_VERSION = 1


def manifest_path(path: Path) -> Path:
    """コンテナに対応するマニフェストのパス"""
    return Path(path).with_suffix('.json')


def write_arrays(path: Path, arrays: Dict[str, np.ndarray], attrs: Optional[Dict[str, Any]] = None) -> Path:
    """
    配列群をHDF5ファイルに書き込み

    データセット名は辞書のキーをそのまま用います（順序は保存されます）。

    Args:
        path: 出力パス
        arrays: 名前 -> 配列
        attrs: ルート属性（文字列・数値）

    Returns:
        出力パス

    Raises:
        DataSaveError: 書き込み失敗
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with h5py.File(path, 'w', track_order=True) as file:
            file.attrs['container_version'] = CONTAINER_VERSION
            for key, value in (attrs or {}).items():
                file.attrs[key] = value
            for name, array in arrays.items():
                file.create_dataset(name, data=np.asarray(array), track_times=False)
    except (OSError, TypeError, ValueError) as e:
        raise DataSaveError(f"配列コンテナの書き込みに失敗しました: {path}", cause=e)

    logger.debug(f"配列コンテナを書き込みました: {path} ({len(arrays)} 配列)")
    return path


def read_arrays(path: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    HDF5ファイルから配列群と属性を読み込み

    Returns:
        (名前 -> 配列, ルート属性)

    Raises:
        DataLoadException: ファイルが存在しない、または壊れている場合
    """
    path = Path(path)
    if not path.exists():
        raise DataLoadException(f"ファイルが見つかりません: {path}")
    try:
        with h5py.File(path, 'r') as file:
            arrays = {name: file[name][()] for name in file.keys()}
            attrs = {key: _plain(value) for key, value in file.attrs.items()}
    except OSError as e:
        raise DataLoadException(f"配列コンテナの読み込みに失敗しました: {path}", cause=e)
    return arrays, attrs


def _plain(value: Any) -> Any:
    """h5py属性値をPythonの値に変換"""
    if isinstance(value, bytes):
        return value.decode('utf-8')
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_manifest(path: Path, manifest: Dict[str, Any]) -> Path:
    """マニフェストをJSONで書き出し"""
    target = manifest_path(path)
    try:
        with open(target, 'w', encoding='utf-8') as file:
            json.dump(manifest, file, ensure_ascii=False, indent=2, sort_keys=True)
    except OSError as e:
        raise DataSaveError(f"マニフェストの書き込みに失敗しました: {target}", cause=e)
    return target


def read_manifest(path: Path) -> Dict[str, Any]:
    """マニフェストを読み込み"""
    target = manifest_path(path)
    if not target.exists():
        raise DataLoadException(f"マニフェストが見つかりません: {target}")
    try:
        with open(target, 'r', encoding='utf-8') as file:
            return json.load(file)
    except json.JSONDecodeError as e:
        raise DataLoadException(f"マニフェストの解析エラー: {target}", cause=e)


def save_dataset(dataset: SyntheticDataset, path: Path) -> Path:
    """
    データセットをコンテナとマニフェストに保存

    Returns:
        コンテナのパス
    """
    cfg = dataset.config
    write_arrays(path, {'images': dataset.images, 'labels': dataset.labels}, attrs={'kind': 'dataset'})
    write_manifest(path, {
        'kind': 'dataset',
        'container_version': CONTAINER_VERSION,
        'num_images': len(dataset),
        'image_shape': list(dataset.image_shape),
        'class_ids': dataset.classes,
        'seed': dataset.seed,
        'config': {
            'num_classes': cfg.num_classes,
            'num_test_classes': cfg.num_test_classes,
            'samples_per_class': cfg.samples_per_class,
            'image_shape': list(cfg.image_shape),
            'noise_level': cfg.noise_level,
            'crop_fraction': cfg.crop_fraction,
            'split_seed': cfg.split_seed
        }
    })
    logger.info(f"データセットを保存しました: {path}")
    return Path(path)


def load_dataset(path: Path) -> SyntheticDataset:
    """
    保存済みデータセットを読み込み

    Raises:
        DataLoadException: ファイル不在、種別不一致
    """
    arrays, attrs = read_arrays(path)
    if attrs.get('kind') != 'dataset':
        raise DataLoadException(f"データセットのコンテナではありません: {path}")
    manifest = read_manifest(path)
    config = manifest['config']
    cfg = DatasetConfig(
        num_classes=config['num_classes'],
        num_test_classes=config['num_test_classes'],
        samples_per_class=config['samples_per_class'],
        image_shape=tuple(config['image_shape']),
        noise_level=config['noise_level'],
        crop_fraction=config['crop_fraction'],
        split_seed=config['split_seed']
    )
    return SyntheticDataset(arrays['images'], arrays['labels'].astype(np.int64), int(manifest['seed']), cfg)


def save_embeddings(index: EmbeddingIndex, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    埋め込みインデックスを保存

    Args:
        index: 埋め込みインデックス
        path: 出力パス
        extra: マニフェストに追加する情報（チェックポイントのパスなど）
    """
    write_arrays(path, {'embeddings': index.embeddings, 'labels': index.labels}, attrs={'kind': 'embeddings'})
    write_manifest(path, {
        'kind': 'embeddings',
        'container_version': CONTAINER_VERSION,
        'num_rows': len(index),
        'embedding_dim': index.dim,
        'class_ids': sorted(set(index.labels.tolist())),
        **(extra or {})
    })
    logger.info(f"埋め込みを保存しました: {path} ({len(index)} 行)")
    return Path(path)

