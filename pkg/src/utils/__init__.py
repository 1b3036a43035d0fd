"""
Utils - 共通ユーティリティ層

例外体系、ログシステム、メトリクスログを提供します。
"""
