"""
예측 파이프라인 공통 예외 정의
CLI 종료 코드 매핑: UsageError → 1, DataError/ConfigError → 2, 그 외 → 3
"""
from datetime import date
from typing import Optional


class ForecastError(Exception):
    """모든 도메인 예외의 기본 클래스"""


class ArgumentError(ForecastError, ValueError):
    """연산 인자가 허용 범위를 벗어났을 때"""


class ConfigError(ForecastError, ValueError):
    """실행 설정 파일이 잘못되었거나 필수 값이 없을 때"""


class UsageError(ForecastError):
    """명령행 사용법 오류"""


class DataError(ForecastError, ValueError):
    """입력 데이터가 문서화된 스키마/불변식을 위반했을 때"""


class AlignmentError(DataError):
    """허용 일수(fill_limit)를 넘는 결측 구간"""

    def __init__(self, column: str, gap_start: date, gap_end: date, fill_limit: int):
        self.column = column
        self.gap_start = gap_start
        self.gap_end = gap_end
        self.fill_limit = fill_limit
        days = (gap_end - gap_start).days + 1
        super().__init__(
            f"컬럼 '{column}'의 결측 구간 {gap_start.isoformat()} ~ {gap_end.isoformat()} "
            f"({days}일)이 fill_limit={fill_limit}일을 초과합니다."
        )


class ConsistencyError(DataError):
    """접종 차수 간 누적 수량 불일치"""

    def __init__(self, message: str, day: Optional[date] = None, dose: Optional[int] = None):
        self.day = day
        self.dose = dose
        super().__init__(message)


class SchemaError(DataError):
    """CSV 스키마 위반 (파일, 행, 컬럼 위치 포함)"""

    def __init__(self, path: str, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.path = str(path)
        self.line = line
        self.column = column
        location = self.path
        if line is not None:
            location += f":{line}"
        if column is not None:
            location += f" [{column}]"
        super().__init__(f"{location}: {message}")


class TrainingDivergenceError(ForecastError, RuntimeError):
    """학습 손실이 유한하지 않은 값으로 발산"""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"epoch {epoch}에서 학습 손실이 발산했습니다 (loss={loss}).")


class SimulationError(ForecastError, RuntimeError):
    """SEIR 적분 단계에서 음수 구획이 발생"""
