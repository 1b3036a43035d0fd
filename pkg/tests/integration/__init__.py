# 統合テストパッケージ