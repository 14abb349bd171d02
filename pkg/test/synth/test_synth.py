# test_features.py
from pytest_bdd import scenarios

# SEIR 합성 지역 / 시나리오 빌더 / 내보내기
scenarios("../../features/synth/synth.feature")
