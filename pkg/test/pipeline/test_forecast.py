# test_features.py
from pytest_bdd import scenarios

# 학습 윈도우 / 재귀 예측 / 적응 보정
scenarios("../../features/pipeline/forecast.feature")
