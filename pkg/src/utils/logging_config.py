"""
CentroidDML統合ログシステム

実行ごとの出力ディレクトリ配下にレベル別のログファイルを作り、
src.* のモジュールロガー（logging.getLogger(__name__)）もメインログへ集約します。
log_dirを指定しない場合はファイルを一切作成しません（ライブラリ利用・テスト用）。

    <log_dir>/CentroidDML.log              一般ログ（src.* を含む）
    <log_dir>/errors/error.log             例外の詳細とトレースバック
    <log_dir>/debug/debug.log              デバッグモード時のみ
    <log_dir>/performance/performance.log  fit / evaluate / 勾配検査の処理時間
"""

import functools
import logging
import logging.handlers
import platform
import time
import traceback
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from src.utils.exceptions import CentroidDMLException, ErrorLevel, get_error_level


# ライブラリモジュールの親ロガー名
LIBRARY_LOGGER_NAME = "src"

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUP_COUNT = 5

# ロガー名の接尾辞 -> (log_dirからの相対パス, レベル)
_FILE_LOGGERS = {
    "error": ("errors/error.log", logging.ERROR),
    "debug": ("debug/debug.log", logging.DEBUG),
    "performance": ("performance/performance.log", logging.INFO),
}

_attached_library_handlers: List[logging.Handler] = []


@dataclass
class OperationStats:
    """操作ごとの処理時間の集計"""

    count: int = 0
    total_duration: float = 0.0
    min_duration: float = float('inf')
    max_duration: float = 0.0

    def add(self, duration: float) -> None:
        self.count += 1
        self.total_duration += duration
        self.min_duration = min(self.min_duration, duration)
        self.max_duration = max(self.max_duration, duration)

    @property
    def avg_duration(self) -> float:
        return self.total_duration / self.count if self.count else 0.0

    def to_dict(self) -> Dict[str, float]:
        return {
            "count": self.count,
            "total_duration": self.total_duration,
            "min_duration": self.min_duration,
            "max_duration": self.max_duration,
            "avg_duration": self.avg_duration
        }


def _exception_details(exception: BaseException, **context) -> Dict[str, Any]:
    """例外の種類・メッセージ・トレースバックを辞書にまとめる"""
    if isinstance(exception, CentroidDMLException):
        details = exception.to_dict()
        details['exception_message'] = details.pop('message')
    else:
        details = {
            "exception_type": type(exception).__name__,
            "exception_message": str(exception),
            "traceback": traceback.format_exc()
        }
    details.update(context)
    return details


class CentroidDMLLogger:
    """
    CentroidDMLアプリケーション用の統合ログシステム

    メイン・エラー・デバッグ・パフォーマンスの4つのファイルロガーと
    コンソール出力（標準エラー）を束ねます。
    """

    def __init__(self, log_dir: Optional[str] = "logs", app_name: str = "CentroidDML"):
        """
        Args:
            log_dir: ログディレクトリパス（Noneの場合はファイル出力なし）
            app_name: アプリケーション名（メインログのファイル名）
        """
        self.log_dir = self._prepare_directory(log_dir)
        self.app_name = app_name
        self.debug_mode = False
        self.performance_data: Dict[str, OperationStats] = {}

        self.main_logger = self._file_logger("main", f"{app_name}.log", logging.INFO)
        self.error_logger, self.debug_logger, self.performance_logger = (
            self._file_logger(suffix, path, level) for suffix, (path, level) in _FILE_LOGGERS.items()
        )
        self.console_logger = self._console_logger()
        self._forward_library_logs()

    @staticmethod
    def _prepare_directory(log_dir: Optional[str]) -> Optional[Path]:
        """ログディレクトリとサブディレクトリを作成（失敗時はファイル出力なし）"""
        if log_dir is None:
            return None
        root = Path(log_dir)
        try:
            for sub in ("errors", "debug", "performance"):
                (root / sub).mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logging.getLogger(__name__).warning(f"ログディレクトリを作成できません: {root} ({e})")
            return None
        return root

    def _handler(self, relative_path: str) -> logging.Handler:
        if self.log_dir is None:
            return logging.NullHandler()
        handler = logging.handlers.RotatingFileHandler(
            self.log_dir / relative_path, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUP_COUNT, encoding='utf-8'
        )
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
        return handler

    def _file_logger(self, suffix: str, relative_path: str, level: int) -> logging.Logger:
        logger = logging.getLogger(f"centroiddml.{suffix}")
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        logger.addHandler(self._handler(relative_path))
        logger.setLevel(level)
        logger.propagate = False
        return logger

    def _console_logger(self) -> logging.Logger:
        logger = logging.getLogger("centroiddml.console")
        logger.handlers.clear()
        stream = logging.StreamHandler()
        stream.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        logger.addHandler(stream)
        logger.setLevel(logging.INFO)
        logger.propagate = False
        return logger

    def _forward_library_logs(self) -> None:
        """src.* ロガーをメインログファイルへ接続（前回の接続は外す）"""
        _detach_library_handlers()
        if self.log_dir is None:
            return
        handler = self._handler(f"{self.app_name}.log")
        library_logger = logging.getLogger(LIBRARY_LOGGER_NAME)
        library_logger.addHandler(handler)
        library_logger.setLevel(logging.INFO)
        _attached_library_handlers.append(handler)

    def set_debug_mode(self, enabled: bool) -> None:
        """デバッグモードの切替（メイン・コンソール・src.* のレベルを変更）"""
        self.debug_mode = enabled
        level = logging.DEBUG if enabled else logging.INFO
        for logger in (self.main_logger, self.console_logger, logging.getLogger(LIBRARY_LOGGER_NAME)):
            logger.setLevel(level)
        if enabled:
            self.info("デバッグモードが有効になりました")

    def _emit(self, level: int, message: str, **kwargs) -> None:
        self.main_logger.log(level, f"{message} - {kwargs}" if kwargs else message)
        if level >= self.console_logger.level:
            self.console_logger.log(level, message)

    def info(self, message: str, **kwargs) -> None:
        self._emit(logging.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs) -> None:
        self._emit(logging.WARNING, message, **kwargs)

    def error(self, message: str, exception: Optional[BaseException] = None, **kwargs) -> None:
        """エラーログ（exception 指定時はエラーログファイルに詳細を記録）"""
        if exception is not None:
            self.error_logger.error(f"{message} - {_exception_details(exception, **kwargs)}")
        self._emit(logging.ERROR, message, **kwargs)

    def critical(self, message: str, exception: Optional[BaseException] = None, **kwargs) -> None:
        if exception is not None:
            self.error_logger.critical(f"{message} - {_exception_details(exception, **kwargs)}")
        self._emit(logging.CRITICAL, message, **kwargs)

    def debug(self, message: str, **kwargs) -> None:
        """デバッグモード時のみ出力"""
        if not self.debug_mode:
            return
        self.debug_logger.debug(f"{message} - {kwargs}" if kwargs else message)
        self._emit(logging.DEBUG, message, **kwargs)

    def log_exception(self, exception: BaseException, context: Optional[Dict[str, Any]] = None) -> None:
        """
        例外をエラーレベルに応じて記録

        ERROR以上はエラーログファイルに例外の詳細とコンテキストを書き込みます。

        Args:
            exception: 発生した例外
            context: 追加コンテキスト（コマンド名など）
        """
        details = _exception_details(exception, **(context or {}))
        level = get_error_level(exception)
        if level == ErrorLevel.CRITICAL:
            self.critical(f"重要エラーが発生しました: {exception}", exception=exception, **(context or {}))
        elif level == ErrorLevel.ERROR:
            self.error(f"エラーが発生しました: {exception}", exception=exception, **(context or {}))
        elif level == ErrorLevel.WARNING:
            self.warning(f"警告: {exception}", **details)
        else:
            self.info(f"情報: {exception}", **details)

    def log_performance(self, operation: str, duration: float, **metrics) -> None:
        """
        処理時間を記録して集計に加える

        Args:
            operation: 操作名
            duration: 実行時間（秒）
            **metrics: 追加情報（status など）
        """
        record = {"operation": operation, "duration_seconds": duration,
                  "timestamp": datetime.now().isoformat(), **metrics}
        self.performance_logger.info(f"Performance: {record}")
        self.performance_data.setdefault(operation, OperationStats()).add(duration)

    def get_performance_summary(self) -> Dict[str, Dict[str, float]]:
        """操作名 -> 集計値（count / total / min / max / avg）"""
        return {name: stats.to_dict() for name, stats in self.performance_data.items()}

    def log_system_info(self) -> Dict[str, Any]:
        """実行環境（プラットフォーム・torch・CPU・メモリ）を記録"""
        import psutil
        import torch

        info = {
            "platform": platform.system(),
            "python_version": platform.python_version(),
            "torch_version": torch.__version__,
            "torch_threads": torch.get_num_threads(),
            "cpu_count": psutil.cpu_count(),
            "memory_total_gb": round(psutil.virtual_memory().total / 1024 ** 3, 2),
        }
        self.main_logger.info(f"システム情報 - {info}")
        return info

    def close(self) -> None:
        """ファイルハンドラーを閉じる"""
        for logger in (self.main_logger, self.error_logger, self.debug_logger, self.performance_logger):
            for handler in list(logger.handlers):
                logger.removeHandler(handler)
                handler.close()
        _detach_library_handlers()


def _detach_library_handlers() -> None:
    library_logger = logging.getLogger(LIBRARY_LOGGER_NAME)
    for handler in _attached_library_handlers:
        library_logger.removeHandler(handler)
        handler.close()
    _attached_library_handlers.clear()


def performance_monitor(operation_name: Optional[str] = None):
    """
    関数の実行時間をパフォーマンスログに記録するデコレータ

    Args:
        operation_name: 操作名（未指定の場合は関数名）
    """
    def decorator(func: Callable) -> Callable:
        name = operation_name or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                get_logger().log_performance(name, time.perf_counter() - started, status="error", error=str(e))
                raise
            get_logger().log_performance(name, time.perf_counter() - started, status="success")
            return result

        return wrapper
    return decorator


_global_logger: Optional[CentroidDMLLogger] = None


def initialize_logging(log_dir: Optional[str] = "logs", debug_mode: bool = False) -> CentroidDMLLogger:
    """
    グローバルログシステムを（再）初期化

    既存のロガーはファイルハンドラーを閉じてから置き換えます。

    Args:
        log_dir: ログディレクトリ（Noneの場合はファイル出力なし）
        debug_mode: デバッグモード

    Returns:
        新しいロガー
    """
    global _global_logger
    if _global_logger is not None:
        _global_logger.close()

    _global_logger = CentroidDMLLogger(log_dir)
    _global_logger.set_debug_mode(debug_mode)
    if log_dir is not None:
        _global_logger.log_system_info()
    return _global_logger


def get_logger() -> CentroidDMLLogger:
    """グローバルロガー（未初期化の場合はファイル出力なしで生成）"""
    global _global_logger
    if _global_logger is None:
        _global_logger = CentroidDMLLogger(log_dir=None)
    return _global_logger


def log_exception_with_context(operation: str, **context):
    """
    例外を操作名・関数名付きで記録して再送出するデコレータ

    Args:
        operation: 操作名
        **context: 追加コンテキスト
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                get_logger().log_exception(e, {"function": func.__name__, "operation": operation, **context})
                raise

        return wrapper
    return decorator
