# test_features.py
from pytest_bdd import scenarios

# 예측 오차 지표
scenarios("../../features/core/metrics.feature")
