#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
CentroidDML メインアプリケーション

教師なし深層距離学習のコマンドライン・エントリーポイント。
train / ablate / eval / embed / gradcheck の各コマンドを提供します。

終了コード:
    0: 成功
    1: 勾配検査の失敗、その他のエラー
    2: 設定・チェックポイントのエラー
    3: 数値破綻（損失が非有限値）
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from src import __version__
from src.data.array_store import load_dataset, save_embeddings
from src.data.config_manager import ConfigManager
from src.data.synthetic_dataset import SyntheticDataset, generate_splits
from src.evaluation.retrieval import evaluate, extract_embeddings
from src.model.checkpoint import CheckpointData, load_checkpoint
from src.training.experiment import run_ablation, run_cluster_sweep, run_training
from src.training.grad_check import run_gradcheck_suite
from src.utils.exceptions import (
    EXIT_FAILURE, EXIT_OK, CentroidDMLException, ConfigurationError, create_error_context,
    exit_code_for, format_user_friendly_message, wrap_exception
)
from src.utils.logging_config import get_logger, initialize_logging, log_exception_with_context


def _int_list(text: str) -> List[int]:
    """"1,2,4,8" 形式の整数リスト"""
    try:
        return [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"整数のカンマ区切りリストである必要があります: {text}")


def build_parser() -> argparse.ArgumentParser:
    """引数パーサーを構築"""
    parser = argparse.ArgumentParser(
        prog="centroid-dml",
        description="CentroidDML - セントロイド基準の教師なし深層距離学習"
    )
    parser.add_argument("--version", action="version", version=f"CentroidDML v{__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="設定ファイル（JSON）")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="設定の上書き（複数指定可）")
    common.add_argument("--out", default=None, help="出力ディレクトリ")
    common.add_argument("--seed", type=int, default=None, help="全シードを同じ値に設定")

    subparsers = parser.add_subparsers(dest="command", required=True)

    train = subparsers.add_parser("train", parents=[common], help="学習を実行")
    train.add_argument("--checkpoint", type=Path, default=None, help="再開するチェックポイント")

    ablate = subparsers.add_parser("ablate", parents=[common], help="損失項の組み合わせを比較")
    ablate.add_argument("--clusters", type=_int_list, default=None,
                        help="完全版の損失でクラスタ数を掃引（例: 4,8,16）")

    evaluate_cmd = subparsers.add_parser("eval", parents=[common], help="チェックポイントを評価")
    evaluate_cmd.add_argument("--checkpoint", type=Path, required=True)
    evaluate_cmd.add_argument("--dataset", type=Path, default=None, help="保存済みデータセット（既定はテストクラス）")
    evaluate_cmd.add_argument("--k", type=_int_list, default=None, help="Recall@K の K（例: 1,2,4,8）")

    embed = subparsers.add_parser("embed", parents=[common], help="埋め込みを書き出し")
    embed.add_argument("--checkpoint", type=Path, required=True)
    embed.add_argument("--dataset", type=Path, default=None, help="保存済みデータセット（既定はテストクラス）")

    subparsers.add_parser("gradcheck", parents=[common], help="有限差分による勾配検査")
    return parser


class CentroidDMLApplication:
    """
    CentroidDMLアプリケーション統合管理クラス

    設定の解決、出力ディレクトリとログの準備、各コマンドの実行を担います。
    """

    def __init__(self, args: argparse.Namespace):
        """
        Args:
            args: 解析済みのコマンドライン引数
        """
        self.args = args
        self.config: Optional[ConfigManager] = None
        self.output_dir: Optional[Path] = None
        self.command_started = False
        self.logger = get_logger()

    def _resolve_config(self) -> ConfigManager:
        """
        設定ファイル・上書き・シード・出力先を解決

        Raises:
            ConfigurationError: 未知のキーや不正な値（キー名付き）
        """
        config = ConfigManager(self.args.config)
        config.apply_overrides(self.args.overrides)
        if self.args.seed is not None:
            config.set_seed(self.args.seed)
        config.resolve_output_dir(self.args.out)

        errors = config.validate_config()
        if errors:
            raise ConfigurationError("設定が不正です:\n  " + "\n  ".join(errors),
                                     key=errors[0].split(':')[0])
        return config

    def initialize(self) -> None:
        """設定を解決し、出力ディレクトリとログを準備"""
        self.config = self._resolve_config()
        run_config = self.config.build_run_config()
        self.output_dir = Path(run_config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logger = initialize_logging(str(self.output_dir / "logs"), debug_mode=run_config.debug)
        self.logger.info(f"CentroidDML {self.args.command} 開始: 出力先={self.output_dir}")

    def run(self) -> int:
        """
        コマンドを実行

        コマンド内の一般的な例外はCentroidDML例外に変換し、コマンド名と
        出力先を添えてエラーログに記録してから再送出します。

        Returns:
            終了コード
        """
        self.initialize()
        context = create_error_context(self.args.command, output_dir=str(self.output_dir))
        command = wrap_exception(getattr(self, f"cmd_{self.args.command}"))
        handler = log_exception_with_context(**context)(command)
        self.command_started = True
        return handler()

    def cmd_train(self) -> int:
        """学習を実行し、チェックポイント・メトリクスログ・解決済み設定を書き出す"""
        outcome = run_training(self.config, self.output_dir, resume_checkpoint=self.args.checkpoint)
        self.logger.info(f"学習完了: {len(outcome.fit_result.checkpoints)} チェックポイント")
        print(json.dumps(outcome.report.to_dict(), ensure_ascii=False, sort_keys=True))
        return EXIT_OK

    def cmd_ablate(self) -> int:
        """3つのモードで学習して比較表を書き出す（--clusters 指定時はクラスタ数の掃引も）"""
        table = run_ablation(self.config, self.output_dir)
        table.write(self.output_dir, "ablation_table")
        print(table.render())

        if self.args.clusters:
            sweep = run_cluster_sweep(self.config, self.output_dir, self.args.clusters)
            sweep.write(self.output_dir, "cluster_sweep_table")
            print(sweep.render())
        return EXIT_OK

    def _load_checkpoint(self) -> CheckpointData:
        """チェックポイントを読み込み（--config 指定時は構成ハッシュを照合）"""
        expected = self.config.model_hash() if self.args.config is not None else None
        return load_checkpoint(self.args.checkpoint, expected_hash=expected)

    def _target_dataset(self, data: CheckpointData) -> SyntheticDataset:
        """評価対象のデータ（--dataset 未指定時はチェックポイントの設定でテストクラスを生成）"""
        if self.args.dataset is not None:
            return load_dataset(self.args.dataset)
        run_config = data.config_manager().build_run_config()
        _, test_set = generate_splits(run_config.dataset, run_config.dataset_seed)
        return test_set

    def cmd_eval(self) -> int:
        """チェックポイントを評価してレポートを書き出す"""
        data = self._load_checkpoint()
        model = data.build_model()
        run_config = data.config_manager().build_run_config()
        ks = self.args.k or list(self.config.build_run_config().recall_ks)

        report = evaluate(model, self._target_dataset(data), ks, run_config.dataset.crop_fraction)
        report.extras['checkpoint'] = str(self.args.checkpoint)
        with open(self.output_dir / "eval_report.json", 'w', encoding='utf-8') as file:
            json.dump(report.to_dict(), file, ensure_ascii=False, indent=2, sort_keys=True)
        print(report.to_json())
        return EXIT_OK

    def cmd_embed(self) -> int:
        """埋め込みをコンテナに書き出す"""
        data = self._load_checkpoint()
        model = data.build_model()
        run_config = data.config_manager().build_run_config()
        dataset = self._target_dataset(data)

        index = extract_embeddings(model, dataset, run_config.dataset.crop_fraction)
        path = save_embeddings(index, self.output_dir / "embeddings.h5", extra={
            'checkpoint': str(self.args.checkpoint),
            'model_hash': data.model_hash
        })
        print(f"{path} ({len(index)} 行)")
        return EXIT_OK

    def cmd_gradcheck(self) -> int:
        """勾配検査スイートを実行し、失敗があれば終了コード1"""
        reports = run_gradcheck_suite(self.config.build_run_config())
        summary = {
            'passed': all(report.passed for report in reports),
            'reports': [report.to_dict() for report in reports]
        }
        with open(self.output_dir / "gradcheck_report.json", 'w', encoding='utf-8') as file:
            json.dump(summary, file, ensure_ascii=False, indent=2, sort_keys=True)

        worst = max((report.worst_relative_error for report in reports), default=0.0)
        print(f"勾配検査: {'成功' if summary['passed'] else '失敗'} "
              f"({len(reports)} 件, 最大相対誤差 {worst:.3e})")
        return EXIT_OK if summary['passed'] else EXIT_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    メインエントリーポイント

    Args:
        argv: コマンドライン引数（Noneの場合は sys.argv）

    Returns:
        終了コード
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help / --version は0、引数エラーは2
        return int(e.code) if isinstance(e.code, int) else EXIT_FAILURE

    app = CentroidDMLApplication(args)
    try:
        return app.run()
    except CentroidDMLException as e:
        # コマンド実行中の例外は run() で記録済み
        if not app.command_started:
            get_logger().log_exception(e, create_error_context(args.command))
        print(format_user_friendly_message(e), file=sys.stderr)
        return exit_code_for(e)
    except KeyboardInterrupt:
        print("\nユーザーによる中断", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        get_logger().log_exception(e, create_error_context(args.command))
        print(f"予期しないエラー: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
