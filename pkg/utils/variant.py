"""
변이 바이러스 감염력 지수
주간 변이 점유율 관측을 일별로 보간하고, 가중합 f(d)를 [α, β]로 정규화한 f̃(d)를 계산한다.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import date
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from utils.config import get_default
from utils.errors import ArgumentError, DataError
from utils.timeseries import DailySeries, DateRange

logger = logging.getLogger(__name__)

VARIANT_COLUMN = "variant_infectivity"
RAW_VARIANT_COLUMN = "variant_infectivity_raw"
DEFAULT_ALPHA = float(get_default("variant", "alpha", default=0.0))
DEFAULT_BETA = float(get_default("variant", "beta", default=1.0))

Weights = Union[Mapping[str, float], Sequence[float]]


def _check_scaling(alpha: float, beta: float) -> None:
    if not beta > alpha:
        raise ArgumentError(f"β({beta})는 α({alpha})보다 커야 합니다.")


@dataclass(frozen=True, eq=False)
class VariantTable:
    """
    주간 변이 점유율 관측 + 변이별 가중치 ω + 스케일 (α, β)

    Args:
        variants: 변이 이름 (N개)
        week_starts: 관측 주 시작일 (엄격히 증가)
        shares: (관측 수 × N) 점유율 행렬, 값은 [0, 1]
        weights: 변이별 감염력 가중치 ω_j ≥ 0
    """
    variants: Tuple[str, ...]
    week_starts: Tuple[date, ...]
    shares: np.ndarray
    weights: Tuple[float, ...]
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        variants = tuple(str(v) for v in self.variants)
        weeks = tuple(self.week_starts)
        shares = np.array(self.shares, dtype=float).reshape(len(weeks), len(variants))
        weights = tuple(float(w) for w in self.weights)
        if not variants:
            raise DataError("변이가 하나도 없습니다.")
        if len(set(variants)) != len(variants):
            raise DataError(f"변이 이름이 중복되었습니다: {variants}")
        if len(weights) != len(variants):
            raise ArgumentError(f"가중치 개수({len(weights)})와 변이 개수({len(variants)})가 다릅니다.")
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise ArgumentError(f"가중치는 유한한 0 이상의 값이어야 합니다: {weights}")
        if any(b <= a for a, b in zip(weeks, weeks[1:])):
            raise DataError("관측 주 시작일이 엄격히 증가하지 않습니다.")
        if shares.size and (not np.all(np.isfinite(shares)) or shares.min() < 0 or shares.max() > 1):
            raise DataError("변이 점유율은 [0, 1] 범위여야 합니다.")
        _check_scaling(self.alpha, self.beta)
        shares.setflags(write=False)
        object.__setattr__(self, "variants", variants)
        object.__setattr__(self, "week_starts", weeks)
        object.__setattr__(self, "shares", shares)
        object.__setattr__(self, "weights", weights)

    @property
    def N(self) -> int:
        return len(self.variants)

    @property
    def weight_map(self) -> Dict[str, float]:
        return dict(zip(self.variants, self.weights))

    @property
    def observed_range(self) -> DateRange:
        if not self.week_starts:
            raise DataError("변이 관측이 없습니다.")
        return DateRange(self.week_starts[0], self.week_starts[-1])

    def with_weights(self, weights: Weights) -> "VariantTable":
        return VariantTable(self.variants, self.week_starts, self.shares, _ordered_weights(self.variants, weights),
                            self.alpha, self.beta)

    def with_scaling(self, alpha: float, beta: float) -> "VariantTable":
        return VariantTable(self.variants, self.week_starts, self.shares, self.weights, alpha, beta)

    def with_variant(self, name: str, weight: float, shares: Sequence[float]) -> "VariantTable":
        """관측 행마다 점유율을 가진 변이 열 추가"""
        column = np.asarray(shares, dtype=float).reshape(-1, 1)
        return VariantTable(
            self.variants + (name,),
            self.week_starts,
            np.hstack([self.shares, column]),
            self.weights + (float(weight),),
            self.alpha,
            self.beta,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.shares, columns=list(self.variants))
        frame.insert(0, "week_start", [w.isoformat() for w in self.week_starts])
        return frame

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        weights: Weights,
        alpha: float = DEFAULT_ALPHA,
        beta: float = DEFAULT_BETA,
    ) -> "VariantTable":
        """week_start 컬럼 + 변이별 점유율 컬럼 DataFrame에서 생성"""
        if "week_start" not in frame.columns:
            raise DataError("week_start 컬럼이 없습니다.")
        frame = frame.sort_values("week_start")
        weeks = tuple(pd.to_datetime(frame["week_start"]).dt.date)
        variants = tuple(c for c in frame.columns if c != "week_start")
        return cls(
            variants,
            weeks,
            frame[list(variants)].to_numpy(dtype=float),
            _ordered_weights(variants, weights),
            alpha,
            beta,
        )


def _ordered_weights(variants: Sequence[str], weights: Weights) -> Tuple[float, ...]:
    if isinstance(weights, Mapping):
        missing = [v for v in variants if v not in weights]
        if missing:
            raise ArgumentError(f"가중치가 지정되지 않은 변이: {missing}")
        extra = sorted(set(weights) - set(variants))
        if extra:
            logger.warning(f"관측에 없는 변이의 가중치는 무시합니다: {extra}")
        return tuple(float(weights[v]) for v in variants)
    values = tuple(float(w) for w in weights)
    if len(values) != len(variants):
        raise ArgumentError(f"가중치 개수({len(values)})와 변이 개수({len(variants)})가 다릅니다.")
    return values


@dataclass(frozen=True)
class InfectivitySeries:
    """원시 지수 f(d)와 정규화 지수 f̃(d), 고정된 전역 min/max"""
    raw: DailySeries
    normalized: DailySeries
    global_min: float
    global_max: float
    alpha: float
    beta: float

    @property
    def degenerate(self) -> bool:
        return self.global_max == self.global_min


def interpolate_daily(table: VariantTable, date_range: DateRange) -> Dict[str, DailySeries]:
    """
    주간 관측을 선형 보간해 변이별 일별 점유율 v_dj 생성

    첫 관측 이전/마지막 관측 이후는 상수 외삽, 일별 합이 0보다 크면 합 1로 재정규화

    Raises:
        DataError: 관측이 없을 때
    """
    if not table.week_starts:
        raise DataError("변이 관측이 없습니다.")
    x_obs = np.array([w.toordinal() for w in table.week_starts], dtype=float)
    x = np.array([d.toordinal() for d in date_range.days()], dtype=float)
    daily = np.column_stack([np.interp(x, x_obs, table.shares[:, j]) for j in range(table.N)])
    totals = daily.sum(axis=1)
    positive = totals > 0
    daily[positive] = daily[positive] / totals[positive, None]
    return {
        name: DailySeries(name, date_range.start, daily[:, j])
        for j, name in enumerate(table.variants)
    }


def raw_infectivity(
    shares: Mapping[str, DailySeries],
    weights: Weights,
    name: str = RAW_VARIANT_COLUMN,
) -> DailySeries:
    """
    f(d) = Σ_j ω_j v_dj

    Raises:
        ArgumentError: 점유율과 가중치의 차원이 다를 때
    """
    if not shares:
        raise ArgumentError("변이 점유율이 비어 있습니다.")
    variants = tuple(shares)
    if isinstance(weights, Mapping) and set(weights) != set(variants):
        raise ArgumentError(f"가중치 변이 {sorted(weights)}와 점유율 변이 {sorted(variants)}가 다릅니다.")
    omega = np.array(_ordered_weights(variants, weights))
    first = shares[variants[0]]
    for series in shares.values():
        if series.start_date != first.start_date or len(series) != len(first):
            raise ArgumentError(f"변이 '{series.name}'의 기간이 다른 변이와 다릅니다.")
    matrix = np.column_stack([shares[v].values for v in variants])
    return DailySeries(name, first.start_date, matrix @ omega)


def normalize_infectivity(
    f: DailySeries,
    alpha: float,
    beta: float,
    global_min: float,
    global_max: float,
    name: str = VARIANT_COLUMN,
) -> DailySeries:
    """
    f̃(d) = (β−α)(f(d)−min)/(max−min) + α, 범위 밖 값은 [α, β]로 제한

    Raises:
        ArgumentError: β ≤ α 또는 global_max < global_min
    """
    _check_scaling(alpha, beta)
    if global_max < global_min:
        raise ArgumentError(f"global_max({global_max})가 global_min({global_min})보다 작습니다.")
    if global_max == global_min:
        return DailySeries(name, f.start_date, np.full(len(f), float(alpha)))
    scaled = (beta - alpha) * (f.values - global_min) / (global_max - global_min) + alpha
    return DailySeries(name, f.start_date, np.clip(scaled, alpha, beta))


def infectivity_index(table: VariantTable, date_range: DateRange) -> InfectivitySeries:
    """
    date_range에 대한 f와 f̃ 계산

    전역 min/max는 전체 관측 기간의 f로 한 번 계산해 고정한다.
    """
    observed = table.observed_range
    full_raw = raw_infectivity(interpolate_daily(table, observed), table.weights)
    global_min = float(full_raw.values.min())
    global_max = float(full_raw.values.max())
    if global_min == global_max:
        logger.warning(f"변이 감염력 지수가 관측 기간 동안 상수({global_min})입니다. f̃ = α로 둡니다.")
    raw = raw_infectivity(interpolate_daily(table, date_range), table.weights)
    normalized = normalize_infectivity(raw, table.alpha, table.beta, global_min, global_max)
    logger.debug(f"변이 지수 계산: {date_range}, min={global_min:.4f}, max={global_max:.4f}")
    return InfectivitySeries(raw, normalized, global_min, global_max, table.alpha, table.beta)
