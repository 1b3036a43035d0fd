# テスト用の__init__.py