# test_features.py
from pytest_bdd import scenarios

# 백신 효과 / 코호트 재배분
scenarios("../../features/core/vaccination.feature")
