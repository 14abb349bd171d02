# test_features.py
from pytest_bdd import scenarios

# 명령행 하위 명령 / 종료 코드
scenarios("../../features/cli/cli.feature")
