"""
예측 오차 지표
기간 평균 상대 오차(관측 0인 날 제외)와 유행 단계(spread/peak/decay/full)별 오차
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import date
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from utils.errors import ArgumentError
from utils.timeseries import DailySeries, DateRange, moving_average

logger = logging.getLogger(__name__)

PHASE_NAMES: Tuple[str, ...] = ("spread", "peak", "decay", "full")


def mean_relative_error(actual: np.ndarray, predicted: np.ndarray) -> float:
    """배열 버전 평균 상대 오차 (관측 0 이하인 원소 제외, 모두 제외되면 NaN)"""
    y = np.asarray(actual, dtype=float).ravel()
    y_hat = np.asarray(predicted, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ArgumentError(f"길이가 다릅니다: {y.size} != {y_hat.size}")
    included = y > 0
    if not included.any():
        return math.nan
    return float(np.mean(np.abs(y[included] - y_hat[included]) / y[included]))


@dataclass(frozen=True)
class ErrorReport:
    """
    평균 상대 오차 리포트

    per_day는 관측 y_d > 0 인 날의 |y − ŷ| / y, 제외된 날은 NaN
    """
    start_date: date
    per_day: np.ndarray
    mean: float
    excluded: int

    @property
    def N(self) -> int:
        return int(self.per_day.size)

    @property
    def included(self) -> int:
        return self.N - self.excluded

    def to_dict(self) -> Dict[str, float]:
        return {"error": self.mean, "days": self.N, "included": self.included, "excluded": self.excluded}


def relative_error(actual: DailySeries, predicted: DailySeries, smoothing_window: int = 1) -> ErrorReport:
    """
    Error = (1/N') Σ |y_d − ŷ_d| / y_d  (y_d > 0 인 날만)

    Args:
        actual: 관측 y
        predicted: 예측 ŷ
        smoothing_window: 1보다 크면 두 시계열을 후행 이동평균한 뒤 계산

    Raises:
        ArgumentError: 길이 또는 시작일이 다를 때
    """
    if len(actual) != len(predicted):
        raise ArgumentError(f"길이가 다릅니다: actual {len(actual)}일, predicted {len(predicted)}일")
    if actual.start_date != predicted.start_date:
        raise ArgumentError(f"시작일이 다릅니다: {actual.start_date} != {predicted.start_date}")
    if smoothing_window > 1:
        actual = moving_average(actual, smoothing_window)
        predicted = moving_average(predicted, smoothing_window)
    y = actual.values
    y_hat = predicted.values
    included = y > 0
    per_day = np.full(y.shape, np.nan)
    per_day[included] = np.abs(y[included] - y_hat[included]) / y[included]
    excluded = int((~included).sum())
    if included.any():
        mean = float(np.mean(per_day[included]))
    else:
        logger.warning(f"'{actual.name}'의 모든 날이 0이어서 상대 오차를 계산할 수 없습니다.")
        mean = math.nan
    per_day.setflags(write=False)
    return ErrorReport(actual.start_date, per_day, mean, excluded)


@dataclass(frozen=True)
class PhaseSpec:
    """유행 단계별 구간 (full은 생략 시 나머지 단계를 덮는 최소 구간)"""
    spread: DateRange
    peak: DateRange
    decay: DateRange
    full: Optional[DateRange] = None

    def __post_init__(self):
        if self.full is None:
            parts = (self.spread, self.peak, self.decay)
            object.__setattr__(
                self, "full", DateRange(min(p.start for p in parts), max(p.end for p in parts))
            )
        for name in PHASE_NAMES[:3]:
            if not self.full.covers(getattr(self, name)):
                raise ArgumentError(f"full 구간 {self.full}이 {name} 구간 {getattr(self, name)}을 포함하지 않습니다.")

    def items(self) -> Iterator[Tuple[str, DateRange]]:
        for name in PHASE_NAMES:
            yield name, getattr(self, name)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "PhaseSpec":
        """{"spread": "2021-07-01..2021-07-31", ...} 또는 DateRange 값"""
        def parse(value):
            if isinstance(value, DateRange):
                return value
            start, _, end = str(value).partition("..")
            if not end:
                raise ArgumentError(f"구간 형식은 'YYYY-MM-DD..YYYY-MM-DD' 이어야 합니다: {value}")
            return DateRange(start.strip(), end.strip())

        missing = [name for name in PHASE_NAMES[:3] if name not in mapping]
        if missing:
            raise ArgumentError(f"단계 구간이 없습니다: {missing}")
        full = parse(mapping["full"]) if mapping.get("full") else None
        return cls(parse(mapping["spread"]), parse(mapping["peak"]), parse(mapping["decay"]), full)


def phase_errors(
    actual: DailySeries,
    predicted: DailySeries,
    phases: PhaseSpec,
    smoothing_window: int = 1,
) -> Dict[str, ErrorReport]:
    """
    단계별 ErrorReport

    Raises:
        ArgumentError: 단계 구간이 시계열 범위를 벗어날 때
    """
    if smoothing_window > 1:
        actual = moving_average(actual, smoothing_window)
        predicted = moving_average(predicted, smoothing_window)
    reports: Dict[str, ErrorReport] = {}
    for name, date_range in phases.items():
        if not (actual.date_range.covers(date_range) and predicted.date_range.covers(date_range)):
            raise ArgumentError(
                f"{name} 구간 {date_range}이 시계열 범위 {actual.date_range} / {predicted.date_range}를 벗어납니다."
            )
        reports[name] = relative_error(actual.slice(date_range), predicted.slice(date_range))
    return reports
