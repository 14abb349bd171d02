# test_features.py
from pytest_bdd import scenarios

# 시계열 정렬/정규화/라벨
scenarios("../../features/core/timeseries.feature")
