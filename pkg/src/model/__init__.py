"""
Model - モデル層

エンコーダ・埋め込み・デコーダ・クラスタリングヘッドと、
それらを束ねるModelBundle、チェックポイントの入出力を提供します。
"""
