"""
Data - データ層

設定管理、合成データセット、画像拡張、バッチ生成、
配列コンテナ（HDF5 + JSONマニフェスト）を提供します。
"""
