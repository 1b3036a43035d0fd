# パフォーマンステストパッケージ

import os

BENCHMARK_ENV = "CENTROIDDML_RUN_BENCHMARKS"


def benchmarks_enabled() -> bool:
    """経験的な傾向の検証（数分かかる）を実行するかどうか"""
    return os.environ.get(BENCHMARK_ENV) == "1"
