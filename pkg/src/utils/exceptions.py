"""
CentroidDMLカスタム例外クラス体系

モデル・損失・学習・評価・データの各層の例外を1つの基底クラスの下に分類し、
ログのエラーレベルとCLIの終了コードを例外の型から決めます。
"""

import functools
import platform
from datetime import datetime
from typing import Any, Callable, Dict, Optional, Tuple, Type


class CentroidDMLException(Exception):
    """
    CentroidDMLアプリケーションの基底例外クラス

    Attributes:
        message: 利用者に表示するメッセージ
        error_code: 識別コード（既定はクラス名）
        details: キー名・損失成分などの付加情報
        cause: 変換元の例外
    """

    def __init__(self, message: str, error_code: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or type(self).__name__
        self.details = dict(details or {})
        self.cause = cause

    def __str__(self) -> str:
        text = f"{self.error_code}: {self.message}"
        return f"{text} (原因: {self.cause})" if self.cause else text

    def to_dict(self) -> Dict[str, Any]:
        """ログ出力用の辞書"""
        return {
            "exception_type": type(self).__name__,
            "error_code": self.error_code,
            "message": self.message,
            "details": self.details,
            "cause": None if self.cause is None else str(self.cause)
        }


# === モデル関連例外 ===

class ModelError(CentroidDMLException):
    """モデルの順伝播に関する例外の基底クラス"""
    pass


class DegenerateEmbeddingError(ModelError):
    """正規化前ベクトルのノルムがほぼゼロ（L2正規化不能）"""
    pass


# === 損失関数関連例外 ===

class LossError(CentroidDMLException):
    """損失計算に関する例外の基底クラス"""
    pass


class EmptyBatchError(LossError):
    """空のバッチに対するエントロピー計算"""
    pass


class DegenerateDenominatorError(LossError):
    """アクティブなセントロイドが1つしかなく分母が空になる"""
    pass


class CentroidConsistencyError(LossError):
    """割り当てられたクラスタにセントロイドが存在しない（内部整合性エラー）"""
    pass


class LossUsageError(LossError):
    """損失関数の誤った呼び出し（例: j == q）"""
    pass


# === 学習関連例外 ===

class TrainingError(CentroidDMLException):
    """学習ループに関する例外の基底クラス"""
    pass


class NumericalFailureError(TrainingError):
    """損失が非有限値になった"""

    def __init__(self, message: str, component: str, **kwargs):
        details = kwargs.pop("details", None) or {}
        details.setdefault("component", component)
        super().__init__(message, details=details, **kwargs)
        self.component = component


# === 評価関連例外 ===

class EvaluationError(CentroidDMLException):
    """評価処理に関する例外の基底クラス"""
    pass


class RetrievalUsageError(EvaluationError):
    """Recall@Kの不正な引数（K >= 行数など）"""
    pass


# === データ関連例外 ===

class DataError(CentroidDMLException):
    """データ処理に関する例外の基底クラス"""
    pass


class DataLoadException(DataError):
    """データ読み込みエラー"""
    pass


class DataSaveError(DataError):
    """データ保存エラー"""
    pass


class DataValidationError(DataError):
    """データ検証エラー"""
    pass


class ConfigurationError(DataError):
    """設定エラー（キー名を保持）"""

    def __init__(self, message: str, key: Optional[str] = None, **kwargs):
        details = kwargs.pop("details", None) or {}
        if key is not None:
            details.setdefault("key", key)
        super().__init__(message, details=details, **kwargs)
        self.key = key


class CheckpointError(DataError):
    """チェックポイントの読み書き・整合性エラー"""
    pass


# === ユーティリティ関数 ===

# 変換元の型 -> (変換先の型, メッセージの接頭辞, エラーコード)
_CONVERSIONS: Tuple[Tuple[Type[BaseException], Type[CentroidDMLException], str, Optional[str]], ...] = (
    (ValueError, DataValidationError, "値の検証エラー", None),
    (FileNotFoundError, DataLoadException, "ファイルが見つかりません", None),
    (ImportError, CentroidDMLException, "依存関係エラー", "DependencyError"),
    (Exception, CentroidDMLException, "予期しないエラー", None),
)


def wrap_exception(func: Callable) -> Callable:
    """
    一般的な例外をCentroidDML例外に変換するデコレータ

    CentroidDML例外はそのまま再送出し、それ以外は _CONVERSIONS の先頭から
    最初に一致した型に変換します（元の例外は cause に保持）。
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CentroidDMLException:
            raise
        except Exception as e:
            for source, target, prefix, code in _CONVERSIONS:
                if isinstance(e, source):
                    raise target(f"{prefix}: {e}", error_code=code, cause=e) from e
            raise

    return wrapper


def create_error_context(operation: str, **context) -> Dict[str, Any]:
    """
    ログに添えるエラーコンテキスト

    Args:
        operation: 実行していた操作名
        **context: エポック番号などの追加情報

    Returns:
        操作名・時刻・実行環境と追加情報の辞書
    """
    return {
        "operation": operation,
        "timestamp": datetime.now().isoformat(),
        "platform": platform.system(),
        "python_version": platform.python_version(),
        **context
    }


# 例外の型名 -> 利用者向けの対処方法
_SOLUTIONS = {
    "ConfigurationError": "設定ファイルのキー名と値の範囲を確認してください。",
    "CheckpointError": "チェックポイントが壊れているか、別の設定で作成されています。",
    "DataLoadException": "ファイルの存在と形式（h5コンテナ）を確認してください。",
    "NumericalFailureError": "損失が発散しました。学習率や温度パラメータを確認してください。",
    "DegenerateEmbeddingError": "埋め込みがゼロベクトルに縮退しました。初期化シードを変更してください。"
}


def format_user_friendly_message(exception: CentroidDMLException, include_technical: bool = False) -> str:
    """
    標準エラーに表示するメッセージ

    Args:
        exception: CentroidDML例外
        include_technical: details を併記するかどうか

    Returns:
        メッセージ（対処方法があれば追記）
    """
    parts = [exception.message]
    solution = _SOLUTIONS.get(type(exception).__name__)
    if solution:
        parts.append(f"解決方法: {solution}")
    if include_technical and exception.details:
        parts.append(f"技術的詳細: {exception.details}")
    return "\n\n".join(parts)


class ErrorLevel:
    """エラーレベル定数"""
    CRITICAL = "CRITICAL"  # 実行停止
    ERROR = "ERROR"        # 処理失敗
    WARNING = "WARNING"    # 警告
    INFO = "INFO"          # 情報
    DEBUG = "DEBUG"        # デバッグ


# 先に一致したものを採用（サブクラスを親クラスより前に置く）
_LEVELS: Tuple[Tuple[Tuple[type, ...], str], ...] = (
    ((DegenerateDenominatorError, ConfigurationError), ErrorLevel.WARNING),
    ((NumericalFailureError, CheckpointError), ErrorLevel.CRITICAL),
    ((CentroidDMLException, ValueError, TypeError, RuntimeError), ErrorLevel.ERROR),
)


def get_error_level(exception: BaseException) -> str:
    """例外の型からログのエラーレベルを決定（該当なしは INFO）"""
    for types, level in _LEVELS:
        if isinstance(exception, types):
            return level
    return ErrorLevel.INFO


# CLI終了コード
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def exit_code_for(exception: BaseException) -> int:
    """
    例外からCLI終了コードを決定

    Returns:
        設定・成果物の不整合は2、数値破綻は3、その他は1
    """
    if isinstance(exception, (ConfigurationError, CheckpointError, DataLoadException)):
        return EXIT_CONFIG
    if isinstance(exception, NumericalFailureError):
        return EXIT_NUMERICAL
    return EXIT_FAILURE
