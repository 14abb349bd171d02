pytest_plugins = [
    "pytest_bdd",
    "steps.common_steps",
    "steps.vaccination_steps",
    "steps.variant_steps",
    "steps.timeseries_steps",
    "steps.metrics_steps",
    "steps.model_steps",
    "steps.pipeline_steps",
    "steps.calibration_steps",
    "steps.synth_steps",
    "steps.ingest_steps",
    "steps.cli_steps",
]


import logging
from pathlib import Path

import pytest
from dotenv import load_dotenv  # type: ignore

# .env 파일 로드 (프로젝트 루트 기준)
project_root = Path(__file__).parent
env_path = project_root / '.env'
load_dotenv(dotenv_path=env_path)


# 로깅 설정
logging.basicConfig(
    level=logging.DEBUG,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

logger = logging.getLogger(__name__)


# ------------------------
# BDD context fixture (각 시나리오마다 독립적으로 생성)
# ------------------------
@pytest.fixture(scope="function")
def bdd_context():
    """
    시나리오 내 스텝 간 데이터 공유를 위한 전용 객체
    각 시나리오마다 독립적으로 생성됩니다.

    딕셔너리처럼 사용 가능 (bdd_context['key']) + store 속성 사용 가능 (bdd_context.store['key'])
    """
    class Context:
        def __init__(self):
            self.store = {}

        def __getitem__(self, key):
            return self.store[key]

        def __setitem__(self, key, value):
            self.store[key] = value

        def get(self, key, default=None):
            return self.store.get(key, default)

        def __contains__(self, key):
            return key in self.store

    return Context()


# ------------------------
# 출력 디렉토리 격리
# ------------------------
@pytest.fixture(autouse=True)
def isolated_output_dir(tmp_path, monkeypatch):
    """산출물이 저장소 output/ 대신 시나리오별 임시 디렉토리에 쓰이도록"""
    out = tmp_path / "output"
    monkeypatch.setenv("FORECAST_OUTPUT_DIR", str(out))
    return out


# ============================================
# pytest-bdd hooks
# ============================================
@pytest.hookimpl(hookwrapper=True)
def pytest_bdd_after_step(request, feature, scenario, step, step_func, step_func_args):
    """스텝 결과를 로그로 남김"""
    outcome = yield
    if outcome.excinfo is not None:
        logger.error(f"[{scenario.name}] 스텝 실패: {step.keyword} {step.name} ({outcome.excinfo[1]})")
    else:
        logger.debug(f"[{scenario.name}] 스텝 통과: {step.keyword} {step.name}")


def pytest_bdd_step_error(request, feature, scenario, step, step_func, step_func_args, exception):
    bdd_context = step_func_args.get('bdd_context')
    if bdd_context is not None and 'error' in bdd_context:
        logger.debug(f"시나리오 컨텍스트의 마지막 오류: {bdd_context.get('error')}")
