"""
Domain - ドメインモデル層

画像サンプル、バッチ、セントロイド、損失内訳、評価レポート、
実行設定などのデータクラスを定義します。
"""
