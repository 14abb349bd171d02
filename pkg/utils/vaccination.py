"""
인구 수준 백신 효과 모델
개별 효과(상승 후 선형 감쇠), 최신 차수 기준 코호트 재배분(FIFO), 감염 면역 가산,
일별 인구 효과 E(d) 계산과 사람 단위 검증용 오라클
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from datetime import date, timedelta
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.config import get_default
from utils.errors import ArgumentError, ConsistencyError, DataError
from utils.timeseries import DailySeries, DateRange

logger = logging.getLogger(__name__)

_DEFAULTS = get_default("vaccination", default={})
DEFAULT_A: Tuple[float, ...] = tuple(_DEFAULTS.get("a", (0.605, 0.756, 0.95)))
DEFAULT_S: float = float(_DEFAULTS.get("s", 0.27))
DEFAULT_K: int = int(_DEFAULTS.get("K", 14))
DEFAULT_SLOPE_PERIOD_DAYS: int = int(_DEFAULTS.get("slope_period_days", 30))
DEFAULT_SECOND_DOSE_INTERVAL: int = int(_DEFAULTS.get("second_dose_interval_days", 21))

EFFECTIVENESS_COLUMN = "vaccination_effectiveness"
# 감염 면역은 2차 접종(완전 접종)과 같은 곡선으로 본다
INFECTION_DOSE = 2
# 부동소수 잔량 허용치
_EPS = 1e-9


@dataclass(frozen=True)
class VaccinationParams:
    """
    백신 효과 파라미터

    Args:
        a: 차수별 최대 효과 a_t (0~1)
        s: 감쇠 기울기 (slope_period_days 일당 효과 감소량)
        K: 최대 효과까지 걸리는 일수
        T: 접종 차수 수 (None이면 len(a))
        P: 인구
        slope_period_days: s의 기준 일수
    """
    a: Tuple[float, ...] = DEFAULT_A
    s: float = DEFAULT_S
    K: int = DEFAULT_K
    T: Optional[int] = None
    P: int = 1
    slope_period_days: int = DEFAULT_SLOPE_PERIOD_DAYS

    def __post_init__(self):
        a = tuple(float(x) for x in self.a)
        object.__setattr__(self, "a", a)
        if self.T is None:
            object.__setattr__(self, "T", len(a))
        if self.T < 1 or len(a) != self.T:
            raise ArgumentError(f"차수 수 T={self.T}와 a의 길이 {len(a)}가 맞지 않습니다.")
        if any(not (0.0 <= x <= 1.0) for x in a):
            raise ArgumentError(f"a_t는 [0, 1] 범위여야 합니다: {a}")
        if self.s < 0:
            raise ArgumentError(f"감쇠 기울기 s는 0 이상이어야 합니다: {self.s}")
        if int(self.K) < 1:
            raise ArgumentError(f"K는 1 이상이어야 합니다: {self.K}")
        if int(self.P) < 1:
            raise ArgumentError(f"인구 P는 1 이상이어야 합니다: {self.P}")
        if int(self.slope_period_days) < 1:
            raise ArgumentError(f"slope_period_days는 1 이상이어야 합니다: {self.slope_period_days}")

    def with_population(self, population: int) -> "VaccinationParams":
        return replace(self, P=int(population))

    def with_calibration(self, s: float, a3: float) -> "VaccinationParams":
        """(s, a_3) 보정 후보 적용"""
        if self.T < 3:
            raise ArgumentError("a_3 보정에는 T >= 3이 필요합니다.")
        a = list(self.a)
        a[2] = a3
        return replace(self, s=s, a=tuple(a))

    def to_dict(self) -> Dict[str, object]:
        return {
            "a": list(self.a), "s": self.s, "K": self.K, "T": self.T, "P": self.P,
            "slope_period_days": self.slope_period_days,
        }


def _check_dose(params: VaccinationParams, t: int) -> None:
    if not 1 <= t <= params.T:
        raise ArgumentError(f"접종 차수 t={t}가 범위 1..{params.T}를 벗어났습니다.")


def individual_effectiveness(params: VaccinationParams, t: int, i: int) -> float:
    """
    t차 접종 i일 후의 개별 효과 e_t(i) = max(0, ẽ_t(i))

    Raises:
        ArgumentError: t가 범위를 벗어나거나 i < 0
    """
    _check_dose(params, t)
    if i < 0:
        raise ArgumentError(f"접종 후 일수는 0 이상이어야 합니다: {i}")
    peak = params.a[t - 1]
    if i <= params.K:
        value = peak * (i / params.K)
    else:
        value = peak - params.s * (i - params.K) / params.slope_period_days
    return max(0.0, value)


def effectiveness_curve(params: VaccinationParams, t: int, length: int) -> np.ndarray:
    """i = 0..length-1 에 대한 e_t(i) 벡터"""
    _check_dose(params, t)
    i = np.arange(length, dtype=float)
    peak = params.a[t - 1]
    ramp = peak * (i / params.K)
    wane = peak - params.s * (i - params.K) / params.slope_period_days
    return np.maximum(0.0, np.where(i <= params.K, ramp, wane))


@dataclass(frozen=True, eq=False)
class DoseAdministrations:
    """차수별 일일 신규 접종자 수 (재배분 전)"""
    doses: Tuple[DailySeries, ...]

    def __post_init__(self):
        doses = tuple(self.doses)
        if not doses:
            raise DataError("접종 데이터가 비어 있습니다.")
        first = doses[0]
        for t, series in enumerate(doses, start=1):
            if series.start_date != first.start_date or len(series) != len(first):
                raise DataError(f"{t}차 접종 시계열의 범위가 1차와 다릅니다.")
            if np.any(series.values < 0):
                day = first.start_date + timedelta(days=int(np.argmax(series.values < 0)))
                raise ConsistencyError(f"{t}차 접종 수가 음수입니다: {day}", day=day, dose=t)
        cumulative = np.cumsum(np.vstack([s.values for s in doses]), axis=1)
        for t in range(1, len(doses)):
            excess = cumulative[t] - cumulative[t - 1] > _EPS
            if np.any(excess):
                k = int(np.argmax(excess))
                day = first.start_date + timedelta(days=k)
                raise ConsistencyError(
                    f"{day.isoformat()}: 누적 {t + 1}차 접종 수({cumulative[t][k]:.0f})가 "
                    f"누적 {t}차 접종 수({cumulative[t - 1][k]:.0f})를 초과합니다.",
                    day=day,
                    dose=t + 1,
                )
        object.__setattr__(self, "doses", doses)

    @property
    def T(self) -> int:
        return len(self.doses)

    @property
    def date_range(self) -> DateRange:
        return self.doses[0].date_range

    def matrix(self, date_range: Optional[DateRange] = None) -> np.ndarray:
        """(T × 일수) 접종 행렬, 데이터 범위 밖의 날은 0"""
        date_range = date_range or self.date_range
        out = np.zeros((self.T, len(date_range)))
        own = self.date_range
        lo = max(own.start, date_range.start)
        hi = min(own.end, date_range.end)
        if lo <= hi:
            src = (lo - own.start).days
            dst = (lo - date_range.start).days
            n = (hi - lo).days + 1
            for t, series in enumerate(self.doses):
                out[t, dst:dst + n] = series.values[src:src + n]
        return out

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.matrix(), axis=1)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {f"dose{t}": np.array(s.values) for t, s in enumerate(self.doses, start=1)},
            index=self.date_range.index(),
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DoseAdministrations":
        """dose1, dose2, ... 컬럼을 가진 일별 DataFrame에서 생성"""
        columns = sorted(
            (c for c in frame.columns if str(c).startswith("dose")),
            key=lambda c: int(str(c)[4:]),
        )
        if not columns:
            raise DataError("dose1.. 컬럼이 없습니다.")
        return cls(tuple(DailySeries.from_pandas(frame[c], name=str(c)) for c in columns))


def doses_from_cumulative(frame: pd.DataFrame) -> DoseAdministrations:
    """누적 접종 수 DataFrame을 일일 신규 접종 수로 변환"""
    daily = frame.diff()
    daily.iloc[0] = frame.iloc[0]
    negative = daily < 0
    if negative.to_numpy().any():
        column = negative.any()[lambda s: s].index[0]
        day = daily.index[negative[column].to_numpy()][0].date()
        raise ConsistencyError(f"누적 {column} 값이 감소했습니다: {day}", day=day)
    return DoseAdministrations.from_frame(daily)


def infer_second_doses(
    first_doses: DailySeries,
    interval_days: int = DEFAULT_SECOND_DOSE_INTERVAL,
    uptake: float = 1.0,
    name: str = "dose2",
) -> DailySeries:
    """
    1차 접종만 있는 지역에서 2차 접종을 interval_days 뒤로 이동해 추정

    누적값을 내림 처리해 정수 인원과 누적 단조성(2차 ≤ 1차)을 유지한다.
    """
    if interval_days < 1:
        raise ArgumentError(f"interval_days는 1 이상이어야 합니다: {interval_days}")
    if not 0.0 <= uptake <= 1.0:
        raise ArgumentError(f"uptake는 [0, 1] 범위여야 합니다: {uptake}")
    cumulative = np.cumsum(first_doses.values)
    shifted = np.zeros_like(cumulative)
    if interval_days < len(cumulative):
        shifted[interval_days:] = cumulative[:-interval_days]
    second_cumulative = np.floor(uptake * shifted + _EPS)
    daily = np.diff(second_cumulative, prepend=0.0)
    return DailySeries(name, first_doses.start_date, daily)


@dataclass(frozen=True)
class CohortLedger:
    """
    기준일 시점의 최신 차수별 코호트 (접종일 → 잔여 인원)

    cohorts[t-1]은 최신 접종이 t차인 사람들을 오래된 접종일 순으로 담는다.
    """
    as_of: date
    cohorts: Tuple[Tuple[Tuple[date, float], ...], ...]
    population: Optional[int] = None
    clamped: bool = False

    @property
    def T(self) -> int:
        return len(self.cohorts)

    def dose_cohorts(self, t: int) -> Dict[date, float]:
        if not 1 <= t <= self.T:
            raise ArgumentError(f"접종 차수 t={t}가 범위 1..{self.T}를 벗어났습니다.")
        return dict(self.cohorts[t - 1])

    def totals(self) -> Tuple[float, ...]:
        """차수별 인원 (N_1, ..., N_T)"""
        return tuple(float(sum(count for _, count in dose)) for dose in self.cohorts)

    @property
    def total(self) -> float:
        return float(sum(self.totals()))

    @property
    def unvaccinated(self) -> Optional[float]:
        if self.population is None:
            return None
        return self.population - self.total

    @property
    def is_empty(self) -> bool:
        return all(not dose for dose in self.cohorts)


class CohortLedgerBuilder:
    """
    일 단위로 전진하며 코호트 재배분과 E(d)를 갱신하는 롤링 장부

    차수별로 접종일 인덱스 배열을 두고, 가장 오래된 비어 있지 않은 코호트를
    head 포인터로 추적한다.
    """

    def __init__(
        self,
        doses: DoseAdministrations,
        origin: date,
        horizon: date,
        population: Optional[int] = None,
        infections: Optional[DailySeries] = None,
    ):
        self.origin = origin
        self.horizon = horizon
        self.population = population
        self.domain = DateRange(origin, horizon)
        n = len(self.domain)
        self.T = doses.T
        self._admin = doses.matrix(self.domain)
        self._remaining = np.zeros((self.T, n))
        self._head = [0] * self.T
        self._infections = np.zeros(n)
        self._infection_input = np.zeros(n)
        if infections is not None:
            if np.any(infections.values < 0):
                raise DataError("DPC에 음수 값이 있습니다.")
            matrix = DoseAdministrations((infections,)).matrix(self.domain)
            self._infection_input = matrix[0]
        self.clamped = False
        self.day_index = -1
        if population is not None and np.sum(self._admin[0]) > population + _EPS:
            raise ConsistencyError(
                f"누적 1차 접종 수({np.sum(self._admin[0]):.0f})가 인구 {population}를 초과합니다.", dose=1
            )

    @property
    def current_day(self) -> date:
        return self.origin + timedelta(days=self.day_index)

    def _consume(self, t: int, count: float, k: int) -> None:
        """t(0-based)차 코호트에서 오래된 순으로 count명 제거"""
        remaining = self._remaining[t]
        available = remaining[self._head[t]:k + 1].sum()
        if count > available + _EPS:
            day = self.origin + timedelta(days=k)
            raise ConsistencyError(
                f"{day.isoformat()}: {t + 2}차 접종 {count:.0f}명이 "
                f"{t + 1}차 코호트 잔여 {available:.0f}명을 초과합니다.",
                day=day,
                dose=t + 2,
            )
        head = self._head[t]
        while count > _EPS and head <= k:
            take = min(remaining[head], count)
            remaining[head] -= take
            count -= take
            if remaining[head] <= _EPS:
                remaining[head] = 0.0
                head += 1
        self._head[t] = head

    def advance(self) -> None:
        """다음 날의 접종/재배분/감염 가산 적용"""
        k = self.day_index + 1
        if k >= len(self.domain):
            raise ArgumentError(f"장부 범위 {self.domain}를 넘어 전진할 수 없습니다.")
        self.day_index = k
        for t in range(self.T):
            self._remaining[t, k] += self._admin[t, k]
            if t >= 1 and self._admin[t, k] > 0:
                self._consume(t - 1, self._admin[t, k], k)
        if self._infection_input[k] > 0:
            self._add_infections(self._infection_input[k], k)

    def advance_to(self, day: date) -> None:
        target = (day - self.origin).days
        while self.day_index < target:
            self.advance()

    def _add_infections(self, count: float, k: int) -> None:
        if self.population is not None:
            room = max(0.0, self.population - self._remaining.sum() - self._infections.sum())
            if count > room + _EPS:
                if not self.clamped:
                    logger.warning(
                        f"{(self.origin + timedelta(days=k)).isoformat()}: 감염 가산으로 총 인원이 "
                        f"인구 {self.population}를 넘어 상한으로 제한합니다."
                    )
                self.clamped = True
                count = room
        self._infections[k] += count

    def effectiveness(self, curves: Sequence[np.ndarray]) -> float:
        """현재 날짜의 Σ 코호트 × e_t(경과일) / P"""
        k = self.day_index
        total = 0.0
        for t in range(self.T):
            head = self._head[t]
            if head <= k:
                total += float(np.dot(self._remaining[t, head:k + 1], curves[t][k - head::-1]))
        if self._infections[:k + 1].any():
            total += float(np.dot(self._infections[:k + 1], curves[INFECTION_DOSE - 1][k::-1]))
        return total / self.population

    def snapshot(self) -> CohortLedger:
        k = self.day_index
        cohorts: List[Tuple[Tuple[date, float], ...]] = []
        for t in range(self.T):
            counts = self._remaining[t, :k + 1].copy()
            if t == INFECTION_DOSE - 1:
                counts += self._infections[:k + 1]
            cohorts.append(tuple(
                (self.origin + timedelta(days=int(j)), float(counts[j]))
                for j in np.flatnonzero(counts > _EPS)
            ))
        return CohortLedger(self.current_day, tuple(cohorts), self.population, self.clamped)


def reallocate_cohorts(
    doses: DoseAdministrations,
    up_to: date,
    population: Optional[int] = None,
) -> CohortLedger:
    """
    up_to 시점까지 접종을 반영해 최신 차수 기준 코호트 장부 생성

    t+1차 접종자 M명은 t차 코호트에서 오래된 접종일부터(FIFO) 제거된다.

    Raises:
        ConsistencyError: t+1차 접종 수가 남은 t차 코호트를 초과할 때
    """
    origin = min(doses.date_range.start, up_to)
    builder = CohortLedgerBuilder(doses, origin, up_to, population=population)
    builder.advance_to(up_to)
    return builder.snapshot()


def augment_with_infections(ledger: CohortLedger, dpc: DailySeries) -> CohortLedger:
    """
    일별 확진자 수를 해당 날짜의 2차(완전 접종) 코호트로 가산

    총 인원이 인구를 넘으면 상한으로 제한하고 clamped 플래그를 세운다.
    """
    if np.any(dpc.values < 0):
        raise DataError("DPC에 음수 값이 있습니다.")
    if ledger.T < INFECTION_DOSE:
        raise ArgumentError(f"감염 가산에는 T >= {INFECTION_DOSE}가 필요합니다.")
    cohorts = [dict(dose) for dose in ledger.cohorts]
    total = ledger.total
    clamped = ledger.clamped
    for offset, count in enumerate(dpc.values):
        day = dpc.start_date + timedelta(days=offset)
        if day > ledger.as_of or count <= 0:
            continue
        if ledger.population is not None:
            room = max(0.0, ledger.population - total)
            if count > room + _EPS:
                clamped = True
                count = room
        if count <= 0:
            continue
        target = cohorts[INFECTION_DOSE - 1]
        target[day] = target.get(day, 0.0) + float(count)
        total += float(count)
    if clamped and not ledger.clamped:
        logger.warning(f"감염 가산으로 총 인원이 인구 {ledger.population}를 넘어 상한으로 제한했습니다.")
    return CohortLedger(
        ledger.as_of,
        tuple(tuple(sorted(dose.items())) for dose in cohorts),
        ledger.population,
        clamped,
    )


@dataclass(frozen=True)
class EffectivenessSeries:
    """일별 인구 수준 백신 효과 E(d)"""
    series: DailySeries
    params: VaccinationParams
    clamped: bool = False

    @property
    def values(self) -> np.ndarray:
        return self.series.values


def population_effectiveness(
    doses: DoseAdministrations,
    params: VaccinationParams,
    date_range: DateRange,
    dpc: Optional[DailySeries] = None,
) -> EffectivenessSeries:
    """
    E(d) = Σ_i Σ_t N_t(d-i) e_t(i) / P  (N_t는 d 시점 기준으로 재배분된 코호트)

    Args:
        doses: 일일 접종 수
        params: 백신 파라미터 (P 포함)
        date_range: 출력 구간
        dpc: 주어지면 감염 면역을 2차 코호트로 가산

    Raises:
        ArgumentError: P가 0 이하이거나 접종 데이터 차수가 T와 다를 때
        ConsistencyError: 누적 1차 접종 수가 P를 넘을 때
    """
    if params.P <= 0:
        raise ArgumentError(f"인구 P는 1 이상이어야 합니다: {params.P}")
    if doses.T != params.T:
        raise ArgumentError(f"접종 데이터 차수({doses.T})와 파라미터 T({params.T})가 다릅니다.")
    starts = [doses.date_range.start, date_range.start]
    if dpc is not None:
        starts.append(dpc.start_date)
    origin = min(starts)
    builder = CohortLedgerBuilder(doses, origin, date_range.end, population=params.P, infections=dpc)
    length = len(builder.domain)
    curves = [effectiveness_curve(params, t, length) for t in range(1, params.T + 1)]
    values = np.zeros(len(date_range))
    offset = (date_range.start - origin).days
    for k in range(length):
        builder.advance()
        if k >= offset:
            values[k - offset] = builder.effectiveness(curves)
    series = DailySeries(EFFECTIVENESS_COLUMN, date_range.start, values)
    return EffectivenessSeries(series, params, builder.clamped)


def brute_force_effectiveness(
    persons: Sequence[Sequence[int]],
    params: VaccinationParams,
    d: int,
) -> float:
    """
    사람 단위 오라클: 각자 d일 이전 최신 접종 차수 t*의 e_t*(d - 접종일) 평균

    Args:
        persons: 사람별 접종일 인덱스 목록 (빈 목록 = 미접종)
        params: 백신 파라미터
        d: 조회 일 인덱스

    Raises:
        DataError: 접종일이 엄격히 증가하지 않거나 T를 초과할 때
    """
    if not persons:
        raise ArgumentError("인원이 비어 있습니다.")
    total = 0.0
    for idx, history in enumerate(persons):
        days = list(history)
        if any(b <= a for a, b in zip(days, days[1:])):
            raise DataError(f"{idx}번째 사람의 접종일이 엄격히 증가하지 않습니다: {days}")
        if len(days) > params.T:
            raise DataError(f"{idx}번째 사람의 접종 횟수({len(days)})가 T={params.T}를 초과합니다.")
        received = [day for day in days if day <= d]
        if received:
            t_star = len(received)
            total += individual_effectiveness(params, t_star, d - received[-1])
    return total / len(persons)


@dataclass(frozen=True)
class EffectivenessAround:
    """기준일 전 잠복기 지연별 E 값"""
    day: date
    by_lag: Mapping[int, float]

    @property
    def minimum(self) -> float:
        return min(self.by_lag.values())

    @property
    def maximum(self) -> float:
        return max(self.by_lag.values())


def effectiveness_around(series: DailySeries, day: date, lags: Iterable[int] = range(7, 11)) -> EffectivenessAround:
    """잠복기(기본 7~10일)를 고려한 기준일 전후 인구 효과"""
    by_lag = {int(lag): series.value_on(day - timedelta(days=int(lag))) for lag in lags}
    if not by_lag:
        raise ArgumentError("lags가 비어 있습니다.")
    return EffectivenessAround(day, by_lag)
