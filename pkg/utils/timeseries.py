"""
일별 시계열 컨테이너와 정렬/정규화/평활/요일 라벨 유틸리티
다른 모든 모듈이 공유하는 기반 타입
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import IntEnum
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from utils.config import get_default
from utils.errors import AlignmentError, ArgumentError, DataError

logger = logging.getLogger(__name__)

DEFAULT_FILL_LIMIT = int(get_default("fill_limit", default=3))


def _as_date(value: Union[date, str, pd.Timestamp]) -> date:
    if isinstance(value, pd.Timestamp):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


@dataclass(frozen=True)
class DateRange:
    """양 끝을 포함하는 일 단위 구간"""
    start: date
    end: date

    def __post_init__(self):
        object.__setattr__(self, "start", _as_date(self.start))
        object.__setattr__(self, "end", _as_date(self.end))
        if self.end < self.start:
            raise ArgumentError(f"구간 끝({self.end})이 시작({self.start})보다 앞섭니다.")

    @classmethod
    def from_length(cls, start: Union[date, str], days: int) -> "DateRange":
        start = _as_date(start)
        if days < 1:
            raise ArgumentError(f"구간 길이는 1일 이상이어야 합니다: {days}")
        return cls(start, start + timedelta(days=days - 1))

    def __len__(self) -> int:
        return (self.end - self.start).days + 1

    def __contains__(self, day: object) -> bool:
        if not isinstance(day, date):
            return False
        return self.start <= day <= self.end

    def covers(self, other: "DateRange") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "DateRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    def days(self) -> List[date]:
        return [self.start + timedelta(days=i) for i in range(len(self))]

    def index(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, self.end, freq="D")

    def offset(self, day: date) -> int:
        """구간 시작으로부터의 일수"""
        return (day - self.start).days

    def __str__(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


@dataclass(frozen=True, eq=False)
class DailySeries:
    """
    하루에 값 하나씩, 결측 없이 이어지는 실수 시계열

    values는 읽기 전용 numpy 배열로 보관한다.
    """
    name: str
    start_date: date
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start_date", _as_date(self.start_date))
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size < 1:
            raise DataError(f"시계열 '{self.name}'이 비어 있습니다.")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DataError(
                f"시계열 '{self.name}'에 유한하지 않은 값이 있습니다: "
                f"{(self.start_date + timedelta(days=bad)).isoformat()}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (
            self.name == other.name
            and self.start_date == other.start_date
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.name, self.start_date, self.values.tobytes()))

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self) - 1)

    @property
    def date_range(self) -> DateRange:
        return DateRange(self.start_date, self.end_date)

    def value_on(self, day: date) -> float:
        offset = (day - self.start_date).days
        if offset < 0 or offset >= len(self):
            raise ArgumentError(f"'{self.name}'의 범위 {self.date_range} 밖의 날짜입니다: {day}")
        return float(self.values[offset])

    def slice(self, date_range: DateRange) -> "DailySeries":
        if not self.date_range.covers(date_range):
            raise ArgumentError(f"'{self.name}'의 범위 {self.date_range}가 {date_range}를 포함하지 않습니다.")
        lo = (date_range.start - self.start_date).days
        return DailySeries(self.name, date_range.start, self.values[lo:lo + len(date_range)])

    def renamed(self, name: str) -> "DailySeries":
        return DailySeries(name, self.start_date, self.values)

    def with_values(self, values: Sequence[float]) -> "DailySeries":
        return DailySeries(self.name, self.start_date, np.asarray(values, dtype=float))

    def to_pandas(self) -> pd.Series:
        return pd.Series(np.array(self.values), index=self.date_range.index(), name=self.name)

    @classmethod
    def from_pandas(cls, series: pd.Series, name: Optional[str] = None) -> "DailySeries":
        """연속된 일별 인덱스를 가진 pandas Series에서 생성"""
        if series.empty:
            raise DataError(f"시계열 '{name or series.name}'이 비어 있습니다.")
        index = pd.DatetimeIndex(series.index)
        expected = pd.date_range(index[0], periods=len(index), freq="D")
        if not index.equals(expected):
            raise DataError(f"시계열 '{name or series.name}'의 날짜가 연속적이지 않습니다.")
        return cls(str(name or series.name), index[0].date(), series.to_numpy(dtype=float))


@dataclass(frozen=True, eq=False)
class RegionPanel:
    """한 지역의 정렬된 다변량 일별 시계열 묶음"""
    region_id: str
    date_range: DateRange
    columns: Mapping[str, DailySeries]
    population: int

    def __post_init__(self):
        if not self.region_id:
            raise DataError("region_id가 비어 있습니다.")
        if int(self.population) < 1:
            raise DataError(f"인구는 양의 정수여야 합니다: {self.population}")
        frozen: Dict[str, DailySeries] = {}
        for name, series in self.columns.items():
            if series.start_date != self.date_range.start or len(series) != len(self.date_range):
                raise DataError(
                    f"컬럼 '{name}'의 범위 {series.date_range}가 패널 범위 {self.date_range}와 다릅니다."
                )
            frozen[name] = series if series.name == name else series.renamed(name)
        object.__setattr__(self, "columns", MappingProxyType(frozen))
        object.__setattr__(self, "population", int(self.population))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegionPanel):
            return NotImplemented
        return (
            self.region_id == other.region_id
            and self.date_range == other.date_range
            and self.population == other.population
            and dict(self.columns) == dict(other.columns)
        )

    def __len__(self) -> int:
        return len(self.date_range)

    def __contains__(self, name: object) -> bool:
        return name in self.columns

    @property
    def column_names(self) -> List[str]:
        return list(self.columns.keys())

    def column(self, name: str) -> DailySeries:
        if name not in self.columns:
            raise DataError(f"패널 '{self.region_id}'에 컬럼 '{name}'이 없습니다.")
        return self.columns[name]

    def values(self, names: Sequence[str]) -> np.ndarray:
        """(일수 × 컬럼 수) 행렬"""
        return np.column_stack([self.column(n).values for n in names]) if names else np.zeros((len(self), 0))

    def with_columns(self, extra: Iterable[DailySeries]) -> "RegionPanel":
        merged = dict(self.columns)
        for series in extra:
            merged[series.name] = series
        return RegionPanel(self.region_id, self.date_range, merged, self.population)

    def drop_columns(self, names: Iterable[str]) -> "RegionPanel":
        drop = set(names)
        kept = {k: v for k, v in self.columns.items() if k not in drop}
        return RegionPanel(self.region_id, self.date_range, kept, self.population)

    def slice(self, date_range: DateRange) -> "RegionPanel":
        return RegionPanel(
            self.region_id,
            date_range,
            {k: v.slice(date_range) for k, v in self.columns.items()},
            self.population,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {name: np.array(series.values) for name, series in self.columns.items()},
            index=self.date_range.index(),
        )

    @classmethod
    def from_frame(cls, region_id: str, frame: pd.DataFrame, population: int) -> "RegionPanel":
        index = pd.DatetimeIndex(frame.index)
        date_range = DateRange(index[0].date(), index[-1].date())
        columns = {
            str(name): DailySeries.from_pandas(frame[name], name=str(name))
            for name in frame.columns
        }
        return cls(region_id, date_range, columns, population)


@dataclass(frozen=True)
class Scaler:
    """min-max 정규화 파라미터"""
    min: float
    max: float

    def __post_init__(self):
        if self.max < self.min:
            raise ArgumentError(f"Scaler max({self.max}) < min({self.min})")

    @property
    def degenerate(self) -> bool:
        return self.max == self.min

    def transform(self, values: Union[np.ndarray, Sequence[float], float]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.degenerate:
            return np.zeros_like(values)
        return (values - self.min) / (self.max - self.min)

    def inverse(self, values: Union[np.ndarray, Sequence[float], float]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.degenerate:
            return np.full_like(values, self.min)
        return values * (self.max - self.min) + self.min

    def to_dict(self) -> Dict[str, float]:
        return {"min": float(self.min), "max": float(self.max)}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "Scaler":
        return cls(float(data["min"]), float(data["max"]))


def _observations(item: Union[DailySeries, pd.Series]) -> pd.Series:
    if isinstance(item, DailySeries):
        return item.to_pandas()
    series = item.copy()
    series.index = pd.DatetimeIndex(series.index).normalize()
    return series.sort_index()


def align_panel(
    series: Sequence[Union[DailySeries, pd.Series]],
    target_range: DateRange,
    fill_limit: int = DEFAULT_FILL_LIMIT,
    region_id: str = "region",
    population: int = 1,
) -> RegionPanel:
    """
    서로 다른 범위/결측을 가진 관측 시계열을 target_range로 정렬

    Args:
        series: DailySeries 또는 날짜 인덱스를 가진 pandas Series (결측일 허용) 목록
        target_range: 정렬 대상 구간
        fill_limit: 내부/후행 결측을 직전 값으로 채울 수 있는 최대 연속 일수
        region_id: 패널 지역 ID
        population: 인구 P

    Returns:
        target_range를 정확히 덮는 RegionPanel

    Raises:
        DataError: 빈 시계열이거나 target_range와 겹치지 않을 때
        AlignmentError: fill_limit보다 긴 결측 구간
    """
    index = target_range.index()
    columns: Dict[str, DailySeries] = {}
    for item in series:
        name = str(item.name)
        observed = _observations(item).dropna()
        if observed.empty:
            raise DataError(f"컬럼 '{name}'에 관측값이 없습니다.")
        if observed.index.has_duplicates:
            dup = observed.index[observed.index.duplicated()][0]
            raise DataError(f"컬럼 '{name}'에 중복 날짜가 있습니다: {dup.date()}")
        observed_range = DateRange(observed.index[0].date(), observed.index[-1].date())
        if not observed_range.overlaps(target_range):
            raise DataError(f"컬럼 '{name}'의 관측 범위 {observed_range}가 {target_range}와 겹치지 않습니다.")

        # 앞쪽 관측이 target_range 이전에 있으면 forward-fill의 출발점이 됨
        reindexed = observed.reindex(observed.index.union(index)).sort_index()
        missing = reindexed.isna().to_numpy()
        first_valid = int(np.argmax(~missing))
        run_start: Optional[int] = None
        for pos in range(first_valid, len(reindexed) + 1):
            is_missing = pos < len(reindexed) and missing[pos]
            if is_missing and run_start is None:
                run_start = pos
            elif not is_missing and run_start is not None:
                gap_days = reindexed.index[run_start:pos]
                in_target = gap_days[(gap_days >= index[0]) & (gap_days <= index[-1])]
                if len(gap_days) > fill_limit and len(in_target) > 0:
                    raise AlignmentError(name, in_target[0].date(), in_target[-1].date(), fill_limit)
                run_start = None
        filled = reindexed.ffill().bfill().reindex(index)
        if filled.isna().any():
            raise DataError(f"컬럼 '{name}'을 정렬할 수 없습니다.")
        columns[name] = DailySeries(name, target_range.start, filled.to_numpy(dtype=float))
        logger.debug(f"컬럼 정렬 완료: {name} ({int(missing.sum())}개 결측 처리)")
    return RegionPanel(region_id, target_range, columns, population)


def minmax_normalize(series: DailySeries, fit_range: Optional[DateRange] = None) -> Tuple[DailySeries, Scaler]:
    """
    fit_range 구간의 min/max로 전체 시계열을 [0,1] 정규화

    fit_range 밖의 값은 [0,1]을 벗어날 수 있다. max == min이면 모두 0 (degenerate Scaler).
    """
    fit_range = fit_range or series.date_range
    fitted = series.slice(fit_range).values
    scaler = Scaler(float(fitted.min()), float(fitted.max()))
    if scaler.degenerate:
        logger.warning(f"'{series.name}'의 학습 구간 값이 상수입니다. 정규화 결과를 0으로 둡니다.")
    return series.with_values(scaler.transform(series.values)), scaler


def moving_average(series: DailySeries, window: int) -> DailySeries:
    """후행(trailing) 이동평균, 초기 구간은 가용 일수만 평균"""
    if window < 1:
        raise ArgumentError(f"window는 1 이상이어야 합니다: {window}")
    rolled = pd.Series(series.values).rolling(window=window, min_periods=1).mean()
    return series.with_values(rolled.to_numpy())


class WorkLabel(IntEnum):
    WORKING = 0
    HOLIDAY = 1
    EXTENDED_HOLIDAY = 2


class EmergencyLabel(IntEnum):
    NORMAL = 0
    EMERGENCY = 1


@dataclass(frozen=True)
class DayLabel:
    work_label: WorkLabel
    emergency: EmergencyLabel

    def __post_init__(self):
        object.__setattr__(self, "work_label", WorkLabel(int(self.work_label)))
        object.__setattr__(self, "emergency", EmergencyLabel(int(self.emergency)))


WORK_LABEL_COLUMN = "work_label"
EMERGENCY_COLUMN = "emergency"


def build_day_labels(
    calendar: Sequence[Tuple[date, Union[int, WorkLabel], Union[int, EmergencyLabel]]],
) -> Tuple[DailySeries, DailySeries]:
    """
    (날짜, 근무 라벨, 긴급사태 라벨) 목록을 두 개의 수치 시계열로 변환

    Raises:
        DataError: 날짜가 연속적이지 않거나 라벨 값이 허용 범위를 벗어날 때
    """
    if not calendar:
        raise DataError("달력이 비어 있습니다.")
    days = [_as_date(entry[0]) for entry in calendar]
    for prev, cur in zip(days, days[1:]):
        if (cur - prev).days != 1:
            raise DataError(f"달력 날짜가 연속적이지 않습니다: {prev} → {cur}")
    try:
        labels = [DayLabel(entry[1], entry[2]) for entry in calendar]
    except ValueError as exc:
        raise DataError(f"허용되지 않는 라벨 값: {exc}") from exc
    work = DailySeries(WORK_LABEL_COLUMN, days[0], [int(label.work_label) for label in labels])
    emergency = DailySeries(EMERGENCY_COLUMN, days[0], [int(label.emergency) for label in labels])
    return work, emergency


def calendar_from_dates(
    date_range: DateRange,
    holidays: Iterable[date] = (),
    extended_holidays: Iterable[date] = (),
    emergency_ranges: Iterable[DateRange] = (),
) -> List[Tuple[date, WorkLabel, EmergencyLabel]]:
    """주말 규칙(토/일 = 휴일)과 공휴일/연휴/긴급사태 구간으로 달력 생성"""
    holiday_set = {_as_date(d) for d in holidays}
    extended_set = {_as_date(d) for d in extended_holidays}
    emergencies = list(emergency_ranges)
    calendar = []
    for day in date_range.days():
        if day in extended_set:
            work = WorkLabel.EXTENDED_HOLIDAY
        elif day in holiday_set or day.weekday() >= 5:
            work = WorkLabel.HOLIDAY
        else:
            work = WorkLabel.WORKING
        emergency = EmergencyLabel.EMERGENCY if any(day in r for r in emergencies) else EmergencyLabel.NORMAL
        calendar.append((day, work, emergency))
    return calendar
