"""
設定管理クラスの実装

実行設定（RunConfig）の読み込み、上書き、検証、
解決済み設定の保存、チェックポイント用の構成ハッシュ計算を行います。
"""

import copy
import hashlib
import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from src.domain.loss_breakdown import AblationMode, LossWeights
from src.domain.run_config import (
    DatasetConfig, GradCheckConfig, ModelConfig, RimConfig, RunConfig, TrainConfig
)
from src.utils.exceptions import ConfigurationError, DataSaveError

OUTPUT_ROOT_ENV = "CENTROIDDML_OUTPUT_ROOT"

# チェックポイントの互換性判定に使うキー
ARCHITECTURE_KEYS = (
    "model.representation_dim",
    "model.embedding_dim",
    "model.embedding_bias",
    "model.encoder_channels",
    "model.dtype",
    "clustering.num_clusters",
    "dataset.image_shape",
)


def _default_config() -> Dict[str, Dict[str, Any]]:
    """デフォルト設定"""
    return {
        "run": {
            "name": "default",
            "output_dir": "runs"
        },
        "seeds": {
            "dataset": 0,
            "init": 0,
            "shuffle": 0,
            "augment": 0
        },
        "dataset": {
            "num_classes": 4,
            "num_test_classes": 4,
            "samples_per_class": 50,
            "image_shape": [1, 16, 16],
            "noise_level": 0.1,
            "crop_fraction": 0.8
        },
        "model": {
            "representation_dim": 64,
            "embedding_dim": 16,
            "embedding_bias": True,
            "encoder_channels": [8, 16],
            "dtype": "float64"
        },
        "clustering": {
            "num_clusters": 32,
            "entropy_weight": 1.0,
            "weight_decay": 1e-3
        },
        "loss": {
            "alpha": 0.9,
            "beta": 0.3,
            "gamma": 0.01,
            "temperature": 0.1,
            "include_positive_in_denominator": False,
            "detach_centroid_denominator": False
        },
        "training": {
            "epochs": 20,
            "batch_size": 16,
            "learning_rate": 0.01,
            "momentum": 0.9,
            "checkpoint_interval": 5,
            "ablation_mode": AblationMode.CBSWR,
            "prefetch": False
        },
        "evaluation": {
            "recall_ks": [1, 2, 4, 8]
        },
        "gradcheck": {
            "step": 1e-5,
            "tolerance": 1e-4,
            "num_batches": 5,
            "batch_size": 4,
            "num_clusters": 4,
            "max_coords_per_group": 24
        },
        "logging": {
            "level": "INFO",
            "debug": False
        }
    }


def parse_value(text: str) -> Any:
    """
    上書き値をJSONリテラルとして解釈

    解釈できない場合は文字列のまま返します。
    """
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class ConfigManager:
    """
    実行設定を管理するクラス

    設定ファイルはセクションごとの入れ子形式と、
    "training.learning_rate" のようなドット区切りのフラット形式の両方を受け付けます。
    未知のキーは誤記とみなして拒否します。
    """

    def __init__(self, config_path: Optional[Path] = None):
        """
        設定管理の初期化

        Args:
            config_path: 設定ファイルのパス（Noneの場合はデフォルト値のみ）

        Raises:
            ConfigurationError: ファイルが読めない、または未知のキーを含む場合
        """
        self.config_path = Path(config_path) if config_path is not None else None
        self.logger = logging.getLogger(__name__)

        self._default_config = _default_config()
        self._config: Dict[str, Dict[str, Any]] = copy.deepcopy(self._default_config)

        if self.config_path is not None:
            self._load_config()

    def _load_config(self) -> None:
        """設定ファイルを読み込み、デフォルト設定にマージ"""
        if not self.config_path.exists():
            raise ConfigurationError(f"設定ファイルが見つかりません: {self.config_path}", key="--config")

        try:
            with open(self.config_path, 'r', encoding='utf-8') as file:
                user_config = json.load(file)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"設定ファイルの解析エラー: {e}", key="--config", cause=e)

        if not isinstance(user_config, dict):
            raise ConfigurationError("設定のルートオブジェクトが辞書ではありません", key="--config")

        for key, value in self._flatten(user_config).items():
            self.set(key, value)

        self.logger.info(f"設定ファイルを読み込みました: {self.config_path}")

    def _flatten(self, data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
        """入れ子の辞書をドット区切りのキーに展開（メタデータは除外）"""
        flat: Dict[str, Any] = {}
        for key, value in data.items():
            if key.startswith('_'):
                continue
            full_key = f"{prefix}{key}"
            if isinstance(value, dict):
                flat.update(self._flatten(value, prefix=f"{full_key}."))
            else:
                flat[full_key] = value
        return flat

    def known_keys(self) -> List[str]:
        """受け付けるキーの一覧"""
        return sorted(self._flatten(self._default_config).keys())

    def get(self, key: str, default: Any = None) -> Any:
        """
        設定値を取得

        Args:
            key: 設定キー（ドット記法）
            default: デフォルト値

        Returns:
            設定値
        """
        section, _, name = key.partition('.')
        return self._config.get(section, {}).get(name, default)

    def set(self, key: str, value: Any) -> None:
        """
        設定値を更新

        Args:
            key: 設定キー（ドット記法）
            value: 設定値

        Raises:
            ConfigurationError: 未知のキー
        """
        section, _, name = key.partition('.')
        if section not in self._default_config or name not in self._default_config[section]:
            raise ConfigurationError(f"未知の設定キーです: {key}", key=key)

        self._config[section][name] = value
        self.logger.debug(f"設定を更新しました: {key} = {value}")

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """
        "key=value" 形式の上書きを適用

        Raises:
            ConfigurationError: 書式不正または未知のキー
        """
        for item in overrides:
            key, sep, raw = item.partition('=')
            if not sep or not key.strip():
                raise ConfigurationError(f"上書き指定は key=value 形式である必要があります: {item}", key=item)
            self.set(key.strip(), parse_value(raw.strip()))

    def set_seed(self, seed: int) -> None:
        """全シードを同じ値に設定"""
        for name in self._default_config["seeds"]:
            self.set(f"seeds.{name}", int(seed))

    def resolve_output_dir(self, cli_out: Optional[str] = None) -> str:
        """
        出力ディレクトリを決定

        優先順位は --out、環境変数 CENTROIDDML_OUTPUT_ROOT、設定値の順です。
        """
        if cli_out:
            output_dir = cli_out
        elif os.environ.get(OUTPUT_ROOT_ENV):
            output_dir = os.environ[OUTPUT_ROOT_ENV]
        else:
            return self.get("run.output_dir")
        self.set("run.output_dir", output_dir)
        return output_dir

    def validate_config(self) -> List[str]:
        """
        設定の妥当性を検証

        Returns:
            キー名付きのエラーメッセージのリスト
        """
        errors = []

        int_keys = [
            "seeds.dataset", "seeds.init", "seeds.shuffle", "seeds.augment",
            "dataset.num_classes", "dataset.num_test_classes", "dataset.samples_per_class",
            "model.representation_dim", "model.embedding_dim", "clustering.num_clusters",
            "training.epochs", "training.batch_size", "training.checkpoint_interval",
            "gradcheck.num_batches", "gradcheck.batch_size", "gradcheck.num_clusters",
            "gradcheck.max_coords_per_group"
        ]
        for key in int_keys:
            value = self.get(key)
            if isinstance(value, bool) or not isinstance(value, int):
                errors.append(f"{key}: 整数である必要があります")

        float_keys = [
            "dataset.noise_level", "dataset.crop_fraction", "clustering.entropy_weight",
            "clustering.weight_decay", "loss.alpha", "loss.beta", "loss.gamma", "loss.temperature",
            "training.learning_rate", "training.momentum", "gradcheck.step", "gradcheck.tolerance"
        ]
        for key in float_keys:
            value = self.get(key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append(f"{key}: 数値である必要があります")

        bool_keys = [
            "model.embedding_bias", "loss.include_positive_in_denominator",
            "loss.detach_centroid_denominator", "training.prefetch", "logging.debug"
        ]
        for key in bool_keys:
            if not isinstance(self.get(key), bool):
                errors.append(f"{key}: true/false である必要があります")

        list_keys = {
            "dataset.image_shape": 3,
            "model.encoder_channels": 2,
        }
        for key, length in list_keys.items():
            value = self.get(key)
            if not isinstance(value, list) or len(value) != length:
                errors.append(f"{key}: {length}要素のリストである必要があります")

        if not isinstance(self.get("evaluation.recall_ks"), list):
            errors.append("evaluation.recall_ks: 整数のリストである必要があります")

        if self.get("training.ablation_mode") not in AblationMode.ALL:
            errors.append(f"training.ablation_mode: {AblationMode.ALL} のいずれかである必要があります")

        if errors:
            return errors

        # 型が揃っている場合のみ値域を確認
        try:
            self.build_run_config()
        except ConfigurationError as e:
            errors.append(e.message)

        return errors

    def build_run_config(self) -> RunConfig:
        """
        型付きのRunConfigを構築

        Returns:
            実行設定

        Raises:
            ConfigurationError: 値が不正な場合
        """
        get = self.get
        try:
            dataset = DatasetConfig(
                num_classes=get("dataset.num_classes"),
                num_test_classes=get("dataset.num_test_classes"),
                samples_per_class=get("dataset.samples_per_class"),
                image_shape=tuple(get("dataset.image_shape")),
                noise_level=float(get("dataset.noise_level")),
                crop_fraction=float(get("dataset.crop_fraction")),
                split_seed=get("seeds.dataset")
            )
            model = ModelConfig(
                image_shape=tuple(get("dataset.image_shape")),
                representation_dim=get("model.representation_dim"),
                embedding_dim=get("model.embedding_dim"),
                num_clusters=get("clustering.num_clusters"),
                embedding_bias=get("model.embedding_bias"),
                encoder_channels=tuple(get("model.encoder_channels")),
                dtype=get("model.dtype"),
                init_seed=get("seeds.init")
            )
            weights = LossWeights(
                alpha=float(get("loss.alpha")),
                beta=float(get("loss.beta")),
                gamma=float(get("loss.gamma")),
                temperature=float(get("loss.temperature"))
            )
            rim = RimConfig(
                num_clusters=get("clustering.num_clusters"),
                entropy_weight=float(get("clustering.entropy_weight")),
                weight_decay=float(get("clustering.weight_decay"))
            )
            train = TrainConfig(
                epochs=get("training.epochs"),
                batch_size=get("training.batch_size"),
                learning_rate=float(get("training.learning_rate")),
                momentum=float(get("training.momentum")),
                checkpoint_interval=get("training.checkpoint_interval"),
                ablation_mode=get("training.ablation_mode"),
                shuffle_seed=get("seeds.shuffle"),
                augment_seed=get("seeds.augment"),
                crop_fraction=float(get("dataset.crop_fraction")),
                prefetch=get("training.prefetch"),
                include_positive_in_denominator=get("loss.include_positive_in_denominator"),
                detach_centroid_denominator=get("loss.detach_centroid_denominator"),
                loss_weights=weights,
                rim=rim
            )
            gradcheck = GradCheckConfig(
                step=float(get("gradcheck.step")),
                tolerance=float(get("gradcheck.tolerance")),
                num_batches=get("gradcheck.num_batches"),
                batch_size=get("gradcheck.batch_size"),
                num_clusters=get("gradcheck.num_clusters"),
                max_coords_per_group=get("gradcheck.max_coords_per_group"),
                seed=get("seeds.init")
            )
            return RunConfig(
                name=str(get("run.name")),
                output_dir=str(get("run.output_dir")),
                dataset=dataset,
                model=model,
                train=train,
                gradcheck=gradcheck,
                dataset_seed=get("seeds.dataset"),
                recall_ks=tuple(get("evaluation.recall_ks")),
                log_level=str(get("logging.level")),
                debug=bool(get("logging.debug"))
            )
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"設定値の型が不正です: {e}", cause=e)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """解決済み設定の入れ子辞書"""
        return copy.deepcopy(self._config)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ConfigManager':
        """辞書（チェックポイント内の解決済み設定など）から構築"""
        manager = cls()
        for key, value in manager._flatten(data).items():
            manager.set(key, value)
        return manager

    def save_resolved(self, path: Path) -> Path:
        """
        解決済み設定のスナップショットを保存

        Args:
            path: 保存先パス

        Returns:
            保存先パス

        Raises:
            DataSaveError: 書き込み失敗
        """
        path = Path(path)
        snapshot = {
            "_metadata": {
                "resolved": datetime.now().isoformat(),
                "source": str(self.config_path) if self.config_path else None,
                "model_hash": self.model_hash()
            },
            **self._config
        }
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as file:
                json.dump(snapshot, file, ensure_ascii=False, indent=2, sort_keys=True)
        except OSError as e:
            raise DataSaveError(f"解決済み設定の保存に失敗しました: {path}", cause=e)

        self.logger.info(f"解決済み設定を保存しました: {path}")
        return path

    def model_hash(self) -> str:
        """アーキテクチャに関わるキーのSHA-256ハッシュ"""
        payload = {key: self.get(key) for key in ARCHITECTURE_KEYS}
        encoded = json.dumps(payload, sort_keys=True).encode('utf-8')
        return hashlib.sha256(encoded).hexdigest()

    def __str__(self) -> str:
        """文字列表現"""
        return f"ConfigManager (パス: {self.config_path}, キー数: {len(self.known_keys())})"
