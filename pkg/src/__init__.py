"""アドレスクラスタリングエンジン本体のモジュールパッケージ。"""

__version__ = "0.1.0"
