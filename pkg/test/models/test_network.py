# test_features.py
from pytest_bdd import scenarios

# 예측/적응 네트워크와 학습
scenarios("../../features/models/network.feature")
