# test_features.py
from pytest_bdd import scenarios

# 입력 CSV 스키마 검증 / 실행 설정 / 지역 로드
scenarios("../../features/ingest/ingest.feature")
