"""
メトリクスログ

1行1レコードのJSON（JSON Lines）でバッチごとの損失値や評価結果を記録します。
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union


class MetricsLog:
    """
    行区切りJSONのメトリクスログ

    キーはソートして書き込むため、同一内容のレコードは同一のバイト列になります。
    """

    def __init__(self, path: Union[str, Path]):
        """
        Args:
            path: ログファイルのパス（親ディレクトリは自動作成）
        """
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: Dict[str, Any]) -> None:
        """レコードを1行追記"""
        with open(self.path, 'a', encoding='utf-8') as file:
            file.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def extend(self, records: Iterable[Dict[str, Any]]) -> None:
        """複数レコードを追記"""
        for record in records:
            self.append(record)

    def reset(self) -> None:
        """ログを空にする（新規の実行の開始時）"""
        self.path.write_text("", encoding='utf-8')

    def rewrite(self, records: Iterable[Dict[str, Any]]) -> None:
        """ログを指定レコードだけで書き直す"""
        self.reset()
        self.extend(records)

    def truncate_to_epoch(self, epoch: int) -> int:
        """
        学習レコードのうちエポック番号が epoch 未満のものだけを残す

        評価レコード（kind付き）も削除します。チェックポイントから再開する
        実行の前に、再開地点より後の記録を取り除くために使用します。

        Returns:
            削除したレコード数
        """
        records = self.read()
        kept = [r for r in records if 'kind' not in r and int(r.get('epoch', 0)) < epoch]
        self.rewrite(kept)
        return len(records) - len(kept)

    def read(self) -> List[Dict[str, Any]]:
        """全レコードを読み込み（ファイルがなければ空リスト）"""
        if not self.path.exists():
            return []
        with open(self.path, 'r', encoding='utf-8') as file:
            return [json.loads(line) for line in file if line.strip()]

    def records_without(self, *keys: str) -> List[Dict[str, Any]]:
        """
        指定キーを除いたレコード一覧

        実行時間（wall_ms）のように実行ごとに変わるフィールドを除外して
        再現性を比較するために使用します。
        """
        return [{k: v for k, v in record.items() if k not in keys} for record in self.read()]

    def __len__(self) -> int:
        return len(self.read())
