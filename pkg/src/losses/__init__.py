"""
Losses - 損失関数層

RIMクラスタリング損失、セントロイド計算、
メトリック損失・再構成損失と多タスク損失の合成を提供します。
"""
