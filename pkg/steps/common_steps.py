"""
여러 기능에서 공유하는 Step Definitions
오류 검증 / 값 목록 파싱
"""
import json
import logging
from typing import Callable, List, Optional

import numpy as np
from pytest_bdd import then, parsers

from utils.errors import ForecastError

logger = logging.getLogger(__name__)


def parse_values(text: str) -> np.ndarray:
    """'[1, 2, null]' 형식의 문자열을 float 배열로 (null → NaN)"""
    return np.array([np.nan if v is None else v for v in json.loads(text)], dtype=float)


def capture_error(bdd_context, action: Callable[[], object]) -> Optional[object]:
    """
    action을 실행하고 도메인 예외는 bdd_context['error']에 보관

    Returns:
        action 반환값 (예외 발생 시 None)
    """
    try:
        return action()
    except ForecastError as exc:
        logger.info(f"예상 가능한 도메인 오류 포착: {type(exc).__name__}: {exc}")
        bdd_context['error'] = exc
        return None


def assert_close(actual, expected, tol: float = 1e-9) -> None:
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    assert actual.shape == expected.shape, f"길이 불일치: {actual.shape} != {expected.shape}"
    diff = float(np.max(np.abs(actual - expected))) if actual.size else 0.0
    assert diff < tol, f"값 불일치 (최대 차이 {diff}): {actual.tolist()} != {expected.tolist()}"


def error_class_names(exc: BaseException) -> List[str]:
    return [cls.__name__ for cls in type(exc).__mro__]


@then(parsers.parse('"{error_name}" 오류가 발생한다'))
def error_is_raised(bdd_context, error_name):
    """
    직전 동작에서 지정한 종류(하위 클래스 포함)의 오류가 발생했는지 확인

    Args:
        bdd_context: 시나리오 컨텍스트
        error_name: 예외 클래스 이름 (예: DataError)
    """
    error = bdd_context.get('error')
    assert error is not None, f"{error_name} 오류가 발생해야 하지만 정상 종료되었습니다."
    assert error_name in error_class_names(error), (
        f"{error_name} 오류를 기대했지만 {type(error).__name__}: {error}"
    )
    logger.info(f"기대한 오류 확인: {type(error).__name__}")


@then("오류가 발생하지 않는다")
def no_error_is_raised(bdd_context):
    error = bdd_context.get('error')
    assert error is None, f"오류가 발생했습니다: {type(error).__name__}: {error}"


@then(parsers.parse('오류 메시지에 "{text}"가 포함된다'))
def error_message_contains(bdd_context, text):
    error = bdd_context.get('error')
    assert error is not None, "발생한 오류가 없습니다."
    assert text in str(error), f"오류 메시지에 '{text}'가 없습니다: {error}"
