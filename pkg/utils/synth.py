"""
SEIR 기반 합성 유행 데이터 생성기
패널 7개 그룹 전부와 숨겨진 정답(E(d), f̃(d), 구획 궤적)을 함께 만든다
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.special import expit

from utils.errors import ArgumentError, SimulationError
from utils.timeseries import (
    DailySeries,
    DateRange,
    RegionPanel,
    build_day_labels,
    calendar_from_dates,
)
from utils.vaccination import (
    EFFECTIVENESS_COLUMN,
    DoseAdministrations,
    VaccinationParams,
    infer_second_doses,
    population_effectiveness,
)
from utils.variant import VARIANT_COLUMN, VariantTable, infectivity_index

logger = logging.getLogger(__name__)

SUBSTEPS_PER_DAY = 10
COMPARTMENTS = ("S", "E", "I", "R")
# 음수 판정 허용치
_NEG_TOL = 1e-9


@dataclass(frozen=True)
class SeverityConfig:
    """DPC에 대한 중증/입원/사망/퇴원 비율과 지연 일수"""
    fractions: Tuple[Tuple[str, float, int], ...] = (
        ("sc", 0.02, 7),
        ("hc", 0.10, 3),
        ("dc", 0.005, 21),
        ("cc", 0.08, 14),
    )

    def __post_init__(self):
        for name, fraction, lag in self.fractions:
            if not 0.0 <= fraction <= 1.0:
                raise ArgumentError(f"'{name}' 비율은 [0, 1] 범위여야 합니다: {fraction}")
            if lag < 0:
                raise ArgumentError(f"'{name}' 지연은 0 이상이어야 합니다: {lag}")


@dataclass(frozen=True, eq=False)
class SynthConfig:
    """
    합성 지역 설정

    Args:
        start_date: 시작일
        days: 일수
        population: 인구 P
        beta0: 기본 전파율 (1/일)
        sigma: 잠복 → 감염 전이율 (1/일)
        gamma: 회복률 (1/일)
        initial_exposed: 초기 E 인원
        initial_infectious: 초기 I 인원
        doses: 일일 접종 수 (None이면 미접종)
        vaccination: 백신 효과 파라미터
        variants: 변이 점유율 표 (None이면 f̃ = 1 고정)
        mobility: 이동량 배율 (None이면 1 고정)
        effectiveness_override: 지정 시 E(d)를 이 값으로 강제
        infectivity_override: 지정 시 f̃(d)를 이 값으로 강제
        severity: 중증도 채널 설정
        holidays, emergency_ranges: 라벨 생성용 달력 정보
        noise: 건수 관측 잡음 (로그정규 표준편차, 0이면 없음)
        seed: 난수 seed
        substeps: 하루당 Euler 스텝 수
    """
    start_date: date = date(2020, 8, 1)
    days: int = 400
    population: int = 1_000_000
    beta0: float = 0.3
    sigma: float = 1 / 5.2
    gamma: float = 1 / 7.0
    initial_exposed: float = 100.0
    initial_infectious: float = 50.0
    doses: Optional[DoseAdministrations] = None
    vaccination: VaccinationParams = VaccinationParams()
    variants: Optional[VariantTable] = None
    mobility: Optional[DailySeries] = None
    effectiveness_override: Optional[DailySeries] = None
    infectivity_override: Optional[DailySeries] = None
    severity: SeverityConfig = SeverityConfig()
    holidays: Tuple[date, ...] = ()
    emergency_ranges: Tuple[DateRange, ...] = ()
    noise: float = 0.0
    seed: int = 0
    substeps: int = SUBSTEPS_PER_DAY

    def __post_init__(self):
        for name in ("beta0", "sigma", "gamma"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name}는 0보다 커야 합니다: {getattr(self, name)}")
        if self.days < 1 or self.population < 1 or self.substeps < 1:
            raise ArgumentError("days/population/substeps는 1 이상이어야 합니다.")
        if self.initial_exposed < 0 or self.initial_infectious < 0:
            raise ArgumentError("초기 인원은 0 이상이어야 합니다.")
        if self.initial_exposed + self.initial_infectious > self.population:
            raise ArgumentError("초기 E + I가 인구를 초과합니다.")
        if self.noise < 0:
            raise ArgumentError(f"noise는 0 이상이어야 합니다: {self.noise}")

    @property
    def date_range(self) -> DateRange:
        return DateRange.from_length(self.start_date, self.days)

    @property
    def dt(self) -> float:
        return 1.0 / self.substeps

    def with_changes(self, **changes) -> "SynthConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SynthOutput:
    """합성 결과: 관측 패널 + 원본 입력 + 숨겨진 정답"""
    config: SynthConfig
    panel: RegionPanel
    doses: Optional[DoseAdministrations]
    variants: Optional[VariantTable]
    effectiveness: DailySeries
    infectivity: DailySeries
    true_dpc: DailySeries
    compartments: pd.DataFrame


def _daily_driver(series: Optional[DailySeries], date_range: DateRange, default: float, name: str) -> np.ndarray:
    if series is None:
        return np.full(len(date_range), default)
    if not series.date_range.covers(date_range):
        raise ArgumentError(f"'{name}' 시계열 {series.date_range}가 생성 구간 {date_range}를 덮지 않습니다.")
    return np.array(series.slice(date_range).values)


def _ground_truth(config: SynthConfig) -> Tuple[np.ndarray, np.ndarray, Optional[VariantTable]]:
    date_range = config.date_range
    if config.effectiveness_override is not None:
        effectiveness = _daily_driver(config.effectiveness_override, date_range, 0.0, EFFECTIVENESS_COLUMN)
    elif config.doses is not None:
        params = config.vaccination.with_population(config.population)
        effectiveness = np.array(population_effectiveness(config.doses, params, date_range).values)
    else:
        effectiveness = np.zeros(len(date_range))
    if config.infectivity_override is not None:
        infectivity = _daily_driver(config.infectivity_override, date_range, 1.0, VARIANT_COLUMN)
    elif config.variants is not None:
        infectivity = np.array(infectivity_index(config.variants, date_range).normalized.values)
    else:
        infectivity = np.ones(len(date_range))
    return effectiveness, infectivity, config.variants


def simulate_seir(config: SynthConfig, effectiveness: np.ndarray, infectivity: np.ndarray,
                  mobility: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    β_eff(d) = β₀ · f̃(d) · (1 − E(d)) · mobility(d) 로 하루 substeps번 Euler 적분

    Returns:
        (일말 구획 (일수 × 4), 일별 신규 E→I 전이 수)

    Raises:
        SimulationError: 구획이 음수가 될 때
    """
    P = float(config.population)
    dt = config.dt
    S = P - config.initial_exposed - config.initial_infectious
    E = float(config.initial_exposed)
    I = float(config.initial_infectious)
    R = 0.0
    states = np.zeros((config.days, 4))
    incidence = np.zeros(config.days)
    for d in range(config.days):
        beta = config.beta0 * infectivity[d] * (1.0 - effectiveness[d]) * mobility[d]
        new_cases = 0.0
        for _ in range(config.substeps):
            infection = beta * S * I / P * dt
            onset = config.sigma * E * dt
            recovery = config.gamma * I * dt
            S -= infection
            E += infection - onset
            I += onset - recovery
            R += recovery
            new_cases += onset
            if min(S, E, I) < -_NEG_TOL:
                raise SimulationError(
                    f"{config.start_date + timedelta(days=d)}: 구획이 음수가 되었습니다 "
                    f"(S={S:.3g}, E={E:.3g}, I={I:.3g}). substeps를 늘려 스텝을 줄이세요."
                )
        states[d] = (S, E, I, R)
        incidence[d] = new_cases
    return states, incidence


def _lagged(values: np.ndarray, fraction: float, lag: int) -> np.ndarray:
    out = np.zeros_like(values)
    if lag < len(values):
        out[lag:] = fraction * values[:len(values) - lag]
    return out


def _observe(values: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise == 0:
        return values.copy()
    return values * rng.lognormal(0.0, noise, size=values.shape)


def _context_columns(config: SynthConfig, mobility: np.ndarray, rng: np.random.Generator) -> List[DailySeries]:
    """이동/기상/라벨/행동 그룹 컬럼"""
    date_range = config.date_range
    start = config.start_date
    n = config.days
    day_of_year = np.array([d.timetuple().tm_yday for d in date_range.days()], dtype=float)
    season = np.sin(2 * np.pi * (day_of_year - 110) / 365.0)

    def jitter(scale: float) -> np.ndarray:
        return rng.normal(0.0, scale, size=n) if config.noise > 0 else np.zeros(n)

    shift = 100.0 * (mobility - 1.0)
    work, emergency = build_day_labels(
        calendar_from_dates(date_range, config.holidays, (), config.emergency_ranges)
    )
    weekend = np.array(work.values) > 0
    columns = [
        DailySeries("retail_recreation", start, 0.8 * shift + jitter(1.0)),
        DailySeries("grocery_pharmacy", start, 0.4 * shift + jitter(1.0)),
        DailySeries("parks", start, 0.6 * shift + 10.0 * season + jitter(1.0)),
        DailySeries("transit_stations", start, shift + jitter(1.0)),
        DailySeries("workplaces", start, shift - 30.0 * weekend + jitter(1.0)),
        DailySeries("residential", start, -0.3 * shift + 8.0 * weekend + jitter(0.5)),
        DailySeries("downtown_population", start, 0.05 * config.population * mobility),
        DailySeries("temp_max", start, 20.0 + 10.0 * season + jitter(1.5)),
        DailySeries("temp_min", start, 12.0 + 9.0 * season + jitter(1.5)),
        DailySeries("humidity", start, 65.0 + 12.0 * season + jitter(3.0)),
        work,
        emergency,
        DailySeries("tweets_nomikai", start, np.maximum(0.0, 40.0 * mobility * (1 + 0.5 * weekend) + jitter(2.0))),
        DailySeries("tweets_karaoke", start, np.maximum(0.0, 15.0 * mobility * (1 + 0.3 * weekend) + jitter(1.0))),
        DailySeries("tweets_bbq", start, np.maximum(0.0, 5.0 + 5.0 * season + jitter(0.5))),
        DailySeries("downtown_population_night", start, 0.02 * config.population * mobility ** 2),
    ]
    return columns


def generate(config: SynthConfig) -> SynthOutput:
    """
    합성 지역 생성

    정답 DPC는 하루 동안의 E→I 전이 수, SC/HC/DC/CC는 지연된 DPC 비율이다.
    잡음은 정답 기록 뒤 관측값에만 곱한다. 같은 설정과 seed면 결과가 비트 단위로 같다.

    Raises:
        SimulationError: 구획이 음수가 될 때
    """
    rng = np.random.default_rng(config.seed)
    date_range = config.date_range
    start = config.start_date
    effectiveness, infectivity, variants = _ground_truth(config)
    mobility = _daily_driver(config.mobility, date_range, 1.0, "mobility")
    states, incidence = simulate_seir(config, effectiveness, infectivity, mobility)

    severity = {name: _lagged(incidence, fraction, lag) for name, fraction, lag in config.severity.fractions}
    observed = [DailySeries("dpc", start, _observe(incidence, config.noise, rng))]
    observed += [DailySeries(name, start, _observe(values, config.noise, rng)) for name, values in severity.items()]
    observed += _context_columns(config, mobility, rng)
    observed.append(DailySeries(VARIANT_COLUMN, start, infectivity))
    observed.append(DailySeries(EFFECTIVENESS_COLUMN, start, effectiveness))

    panel = RegionPanel(f"synth-{config.seed}", date_range, {s.name: s for s in observed}, config.population)
    compartments = pd.DataFrame(states, columns=list(COMPARTMENTS), index=date_range.index())
    logger.info(
        f"합성 지역 생성: {date_range}, P={config.population}, 누적 감염 {incidence.sum():.0f}, "
        f"최고 {int(np.argmax(incidence))}일차"
    )
    return SynthOutput(
        config,
        panel,
        config.doses,
        variants,
        DailySeries(EFFECTIVENESS_COLUMN, start, effectiveness),
        DailySeries(VARIANT_COLUMN, start, infectivity),
        DailySeries("dpc", start, incidence),
        compartments,
    )


# ============================================
# 시나리오 빌더
# ============================================
def takeover_shares(weeks: int, start_week: int, duration_weeks: int, steepness: float = 8.0) -> np.ndarray:
    """
    정규화된 로지스틱 대체 곡선: start_week에서 0, start_week + duration_weeks에서 1, 중간 주에서 0.5
    """
    if weeks < 1 or duration_weeks < 1:
        raise ArgumentError("weeks/duration_weeks는 1 이상이어야 합니다.")
    w = np.arange(weeks, dtype=float)
    x = (w - start_week) / duration_weeks - 0.5
    lo, hi = expit(-0.5 * steepness), expit(0.5 * steepness)
    return np.clip((expit(steepness * x) - lo) / (hi - lo), 0.0, 1.0)


def variant_takeover_table(
    start_date: Union[date, str],
    weeks: int,
    transitions: Sequence[Tuple[str, float, int, int]],
    base: Tuple[str, float] = ("base", 1.0),
    alpha: float = 1.0,
    beta: float = 1.6,
) -> VariantTable:
    """
    주간 점유율 표 생성

    transitions의 각 (이름, 가중치, 시작 주, 기간)은 그 시점의 나머지 점유율을 비례해서 대체한다.
    점유율 합은 매주 1이다.
    """
    start = DateRange.from_length(start_date, 1).start
    week_starts = tuple(start + timedelta(weeks=k) for k in range(weeks))
    names = [base[0]]
    weights = [float(base[1])]
    shares = np.ones((weeks, 1))
    for name, weight, start_week, duration in transitions:
        s = takeover_shares(weeks, start_week, duration)
        shares = np.hstack([shares * (1.0 - s)[:, None], s[:, None]])
        names.append(name)
        weights.append(float(weight))
    return VariantTable(tuple(names), week_starts, shares, tuple(weights), alpha, beta)


def rollout_schedule(
    start_date: Union[date, str],
    days: int,
    population: int,
    start_offset: int = 120,
    daily_rate: float = 0.01,
    coverage: float = 0.7,
    second_dose_interval: int = 21,
    booster_interval: int = 150,
    booster_uptake: float = 0.8,
) -> DoseAdministrations:
    """
    1차 접종을 하루 daily_rate·P명씩 coverage까지 진행하고, 2차는 interval 뒤, 3차는 booster_interval 뒤 일부
    """
    start = DateRange.from_length(start_date, 1).start
    target = np.floor(coverage * population)
    per_day = np.floor(daily_rate * population)
    first = np.zeros(days)
    given = 0.0
    for d in range(start_offset, days):
        if given >= target:
            break
        first[d] = min(per_day, target - given)
        given += first[d]
    dose1 = DailySeries("dose1", start, first)
    dose2 = infer_second_doses(dose1, second_dose_interval, 1.0, name="dose2")
    dose3 = infer_second_doses(dose2, booster_interval, booster_uptake, name="dose3")
    return DoseAdministrations((dose1, dose2, dose3))


def mobility_from_calendar(date_range: DateRange, emergency_ranges: Sequence[DateRange] = (),
                           weekend_drop: float = 0.1, emergency_drop: float = 0.3) -> DailySeries:
    """주말/긴급사태에 줄어드는 이동량 배율"""
    work, emergency = build_day_labels(calendar_from_dates(date_range, (), (), emergency_ranges))
    values = 1.0 - weekend_drop * (np.array(work.values) > 0) - emergency_drop * np.array(emergency.values)
    return DailySeries("mobility", date_range.start, values)


def takeover_scenario(
    start_date: Union[date, str] = date(2020, 8, 1),
    days: int = 400,
    population: int = 1_000_000,
    seed: int = 0,
    vaccination: Optional[VaccinationParams] = None,
    transitions: Sequence[Tuple[str, float, int, int]] = (("delta", 1.6, 40, 8),),
    emergency_ranges: Sequence[DateRange] = (),
    noise: float = 0.05,
    beta0: float = 0.22,
) -> SynthConfig:
    """접종 진행 + 로지스틱 변이 대체 + 긴급사태 이동 감소가 들어간 표준 시나리오"""
    start = DateRange.from_length(start_date, 1).start
    date_range = DateRange.from_length(start, days)
    weeks = days // 7 + 2
    table = variant_takeover_table(start, weeks, transitions)
    return SynthConfig(
        start_date=start,
        days=days,
        population=population,
        beta0=beta0,
        doses=rollout_schedule(start, days, population),
        vaccination=vaccination or VaccinationParams(),
        variants=table,
        mobility=mobility_from_calendar(date_range, emergency_ranges),
        emergency_ranges=tuple(emergency_ranges),
        noise=noise,
        seed=seed,
    )


def fifo_population(
    rng: np.random.Generator,
    population: int,
    days: int,
    T: int = 3,
    start_date: Union[date, str] = date(2021, 1, 1),
    daily_probability: float = 0.01,
) -> Tuple[DoseAdministrations, List[List[int]]]:
    """
    FIFO 규칙을 따르는 사람 단위 접종 이력과 그에 대응하는 일일 집계 접종 수

    t+1차 접종자는 t차가 최신인 사람 중 가장 오래전에 맞은 사람부터 고른다 (당일 접종자 제외).

    Returns:
        (DoseAdministrations, 사람별 접종일 인덱스 목록)
    """
    start = DateRange.from_length(start_date, 1).start
    histories: List[List[int]] = [[] for _ in range(population)]
    unvaccinated = deque(rng.permutation(population).tolist())
    latest: List[deque] = [deque() for _ in range(T)]
    counts = np.zeros((T, days))
    for d in range(days):
        n_first = min(len(unvaccinated), int(rng.binomial(len(unvaccinated), daily_probability)))
        for _ in range(n_first):
            person = unvaccinated.popleft()
            histories[person].append(d)
            latest[0].append(person)
        counts[0, d] = n_first
        for t in range(1, T):
            queue = latest[t - 1]
            # 당일 접종자는 큐 끝에 몰려 있다
            same_day = 0
            for person in reversed(queue):
                if histories[person][-1] < d:
                    break
                same_day += 1
            eligible = len(queue) - same_day
            n_next = int(rng.binomial(eligible, daily_probability * 2)) if eligible else 0
            for _ in range(n_next):
                person = queue.popleft()
                histories[person].append(d)
                latest[t].append(person)
            counts[t, d] = n_next
    doses = DoseAdministrations(tuple(DailySeries(f"dose{t + 1}", start, counts[t]) for t in range(T)))
    return doses, histories


# ============================================
# 참조 적분 / 내보내기
# ============================================
@dataclass(frozen=True)
class ReferenceSolution:
    """세밀한 ODE 적분 결과 (접종/변이/이동 효과 없음)"""
    days: np.ndarray
    compartments: np.ndarray
    incidence: np.ndarray

    @property
    def peak_day(self) -> int:
        return int(np.argmax(self.incidence))


def integrate_reference(config: SynthConfig) -> ReferenceSolution:
    """
    scipy.integrate.solve_ivp로 SEIR ODE를 적분해 일별 신규 발병 수 계산

    누적 발병 C(dC/dt = σE)를 함께 적분해 하루 단위 차분을 신규 발병으로 쓴다.
    """
    P = float(config.population)

    def derivative(_t, X):
        S, E, I, _R, _C = X
        infection = config.beta0 * S * I / P
        return [-infection, infection - config.sigma * E, config.sigma * E - config.gamma * I,
                config.gamma * I, config.sigma * E]

    S0 = P - config.initial_exposed - config.initial_infectious
    y0 = [S0, config.initial_exposed, config.initial_infectious, 0.0, 0.0]
    t_eval = np.arange(config.days + 1, dtype=float)
    sol = solve_ivp(derivative, (0.0, float(config.days)), y0, t_eval=t_eval,
                    method="LSODA", atol=1e-8, rtol=1e-8)
    if not sol.success:
        raise SimulationError(f"참조 적분 실패: {sol.message}")
    incidence = np.diff(sol.y[4])
    return ReferenceSolution(t_eval[1:], sol.y[:4, 1:].T, incidence)


def export_csv(output: SynthOutput, directory: Union[str, Path]) -> Dict[str, Path]:
    """수집(ingest)이 읽는 것과 같은 스키마로 CSV 저장"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}
    frame = output.panel.drop_columns([EFFECTIVENESS_COLUMN, VARIANT_COLUMN]).to_frame()
    frame.index = [d.isoformat() for d in output.config.date_range.days()]
    frame.index.name = "date"
    paths["panel"] = directory / "panel.csv"
    frame.to_csv(paths["panel"], encoding="utf-8")
    if output.doses is not None:
        doses = output.doses.to_frame()
        doses.index = [d.isoformat() for d in output.doses.date_range.days()]
        doses.index.name = "date"
        paths["doses"] = directory / "doses.csv"
        doses.to_csv(paths["doses"], encoding="utf-8")
    if output.variants is not None:
        paths["variants"] = directory / "variants.csv"
        output.variants.to_frame().to_csv(paths["variants"], index=False, encoding="utf-8")
    truth = pd.DataFrame({
        "date": [d.isoformat() for d in output.config.date_range.days()],
        "true_dpc": output.true_dpc.values,
        EFFECTIVENESS_COLUMN: output.effectiveness.values,
        VARIANT_COLUMN: output.infectivity.values,
    })
    paths["truth"] = directory / "truth.csv"
    truth.to_csv(paths["truth"], index=False, encoding="utf-8")
    logger.info(f"합성 데이터 저장: {directory} ({', '.join(sorted(paths))})")
    return paths
