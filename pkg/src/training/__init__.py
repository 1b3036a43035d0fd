"""
Training - 学習層

学習ステップと学習ループ、有限差分による勾配検査、
メトリック損失の計算量計測を提供します。
"""
