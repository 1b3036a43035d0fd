# 単体テストパッケージ