"""
Evaluation - 評価層

埋め込み抽出と Recall@K / NMI による検索・クラスタリング評価を提供します。
"""
