# test_features.py
from pytest_bdd import scenarios

# 변이 감염력 지수
scenarios("../../features/core/variant.feature")
