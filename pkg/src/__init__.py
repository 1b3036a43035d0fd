"""
CentroidDML - セントロイド基準の教師なし深層距離学習

RIMクラスタリング、セントロイド再構成、セントロイド基準のソフトマックス損失で
ラベルなし画像の埋め込みを学習し、Recall@K と NMI で評価するアプリケーション
"""

__version__ = "0.1.0"
__author__ = "CentroidDML Development Team"
__description__ = "ラベルなし画像からセントロイド基準の距離学習で埋め込みを学習するコマンドラインツール"
