# test_features.py
from pytest_bdd import scenarios

# (s, a3) 격자 탐색 / ablation / 입력 선택
scenarios("../../features/calibration/calibration.feature")
