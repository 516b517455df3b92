"""
統合テストモジュール
学習から攻撃・上界評価までを通した再現実験
"""
