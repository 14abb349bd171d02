"""
백신 파라미터 격자 탐색 보정, 데이터셋 그룹 제외(ablation) 실험, 최적 입력 선택
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import timedelta
from itertools import product
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from models.training import TrainConfig
from utils.config import get_default
from utils.dataset_groups import INDICATORS, resolve_groups
from utils.errors import ArgumentError, ForecastError
from utils.forecast_pipeline import (
    FeatureConfig,
    recurrent_rollout,
    rolling_origin_forecast,
    train_indicator_networks,
)
from utils.metrics import ErrorReport, PhaseSpec, phase_errors, relative_error
from utils.synth import SynthConfig, generate
from utils.timeseries import DailySeries, DateRange, RegionPanel
from utils.vaccination import (
    EFFECTIVENESS_COLUMN,
    DoseAdministrations,
    VaccinationParams,
    population_effectiveness,
)

logger = logging.getLogger(__name__)

_CALIBRATION = get_default("calibration", default={})
DEFAULT_S_GRID: Tuple[float, ...] = tuple(_CALIBRATION.get("s_grid", (0.21, 0.24, 0.27)))
DEFAULT_A3_GRID: Tuple[float, ...] = tuple(_CALIBRATION.get("a3_grid", (0.75, 0.85, 0.95)))
DEFAULT_OPTIMIZED_INPUTS: Tuple[str, ...] = tuple(get_default("optimized_inputs", default=()))
# 문서용 참조 값 (검증 기준 아님)
REFERENCE_VALUES: Mapping[str, object] = get_default("reference_values", default={})

BASELINE_RUN = "None"
OPTIMIZED_RUN = "Opt."
EVALUATION_MODES = ("rolling_origin", "recurrent")

ReplicationRunner = Callable[[DoseAdministrations, VaccinationParams], DailySeries]
FeatureRunner = Callable[[FeatureConfig], DailySeries]


# ============================================
# 격자 탐색
# ============================================
@dataclass(frozen=True)
class GridCell:
    s: float
    a3: float
    error: float = math.nan
    failed: bool = False
    message: str = ""
    report: Optional[ErrorReport] = None

    @property
    def status(self) -> str:
        return "failed" if self.failed else "ok"


@dataclass(frozen=True)
class GridSearchResult:
    """(s, a₃) 격자 평가 결과와 최소 오차 셀"""
    cells: Tuple[GridCell, ...]
    best: GridCell
    test_range: Optional[DateRange] = None

    @property
    def failed(self) -> Tuple[GridCell, ...]:
        return tuple(c for c in self.cells if c.failed)

    def best_params(self, base: VaccinationParams) -> VaccinationParams:
        return base.with_calibration(self.best.s, self.best.a3)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"s": c.s, "a3": c.a3, "error": c.error, "status": c.status, "message": c.message} for c in self.cells],
            columns=["s", "a3", "error", "status", "message"],
        )

    def error_matrix(self) -> pd.DataFrame:
        """행 s, 열 a₃ 오차 행렬"""
        return self.to_frame().pivot(index="s", columns="a3", values="error")


def _argmin(cells: Iterable[GridCell]) -> Optional[GridCell]:
    candidates = [c for c in cells if not c.failed and math.isfinite(c.error)]
    if not candidates:
        return None
    return min(candidates, key=lambda c: (c.error, -c.a3, -c.s))


def _run_parallel(jobs: Sequence, task: Callable, workers: int) -> Dict:
    """작업별 결과 dict (단일 스레드에서 병합)"""
    results = {}
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(task, job): job for job in jobs}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
    else:
        for job in jobs:
            results[job] = task(job)
    return results


def grid_search_vaccination(
    doses: DoseAdministrations,
    observed: DailySeries,
    runner: ReplicationRunner,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    a3_grid: Sequence[float] = DEFAULT_A3_GRID,
    base_params: Optional[VaccinationParams] = None,
    test_range: Optional[DateRange] = None,
    smoothing_window: int = int(_CALIBRATION.get("error_smoothing_window", 1)),
    workers: int = int(_CALIBRATION.get("workers", 1)),
) -> GridSearchResult:
    """
    (s, a₃) 격자 전수 평가 후 시험 구간 DPC 상대 오차 최소 셀 선택

    동률이면 a₃가 큰 쪽, 그다음 s가 큰 쪽을 고른다. 실패한 셀은 기록 후 제외한다.

    Args:
        doses: 일일 접종 수
        observed: 관측 DPC
        runner: (doses, params) → DPC 추정 시계열
        s_grid, a3_grid: 후보 값
        base_params: 나머지 백신 파라미터 (None이면 기본값)
        test_range: 오차 계산 구간 (None이면 관측 전체)
        smoothing_window: 오차 계산 전 이동평균 일수
        workers: 병렬 평가 스레드 수

    Raises:
        ArgumentError: 격자가 비어 있을 때
        ForecastError: 모든 셀이 실패했을 때
    """
    if not s_grid or not a3_grid:
        raise ArgumentError("s_grid와 a3_grid는 비어 있으면 안 됩니다.")
    base_params = base_params or VaccinationParams()
    test_range = test_range or observed.date_range
    if not observed.date_range.covers(test_range):
        raise ArgumentError(f"관측 범위 {observed.date_range}가 시험 구간 {test_range}를 덮지 않습니다.")
    actual = observed.slice(test_range)
    jobs = sorted({(float(s), float(a3)) for s, a3 in product(s_grid, a3_grid)})

    def evaluate(job: Tuple[float, float]) -> GridCell:
        s, a3 = job
        try:
            predicted = runner(doses, base_params.with_calibration(s, a3))
            if not predicted.date_range.covers(test_range):
                raise ArgumentError(f"추정 범위 {predicted.date_range}가 시험 구간 {test_range}를 덮지 않습니다.")
            report = relative_error(actual, predicted.slice(test_range).renamed(actual.name), smoothing_window)
            logger.debug(f"격자 셀 (s={s}, a3={a3}): 오차 {report.mean:.4f}")
            return GridCell(s, a3, report.mean, report=report)
        except Exception as exc:
            logger.error(f"격자 셀 (s={s}, a3={a3}) 실패: {exc}", exc_info=True)
            return GridCell(s, a3, failed=True, message=str(exc))

    results = _run_parallel(jobs, evaluate, workers)
    cells = tuple(results[job] for job in jobs)
    best = _argmin(cells)
    if best is None:
        raise ForecastError(f"격자 셀 {len(cells)}개가 모두 실패했습니다.")
    logger.info(
        f"격자 탐색 완료: {len(cells)}셀 (실패 {sum(c.failed for c in cells)}), "
        f"최적 s={best.s}, a3={best.a3}, 오차 {best.error:.4f}"
    )
    return GridSearchResult(cells, best, test_range)


class SeirReplicationRunner:
    """합성 SEIR 생성기로 후보 파라미터의 DPC를 재현하는 빠른 대리 실행기"""

    def __init__(self, config: SynthConfig):
        self.config = config

    def __call__(self, doses: DoseAdministrations, params: VaccinationParams) -> DailySeries:
        output = generate(self.config.with_changes(doses=doses, vaccination=params, noise=0.0))
        return output.true_dpc


class LstmReplicationRunner:
    """
    후보 파라미터로 E(d)를 다시 계산해 DPC 네트워크를 학습하고 시험 구간을 rolling-origin 예측

    Args:
        panel: E(d) 컬럼 없는(있으면 교체) 지역 패널
        features: 입력 피처 구성 (E(d)가 없으면 그룹 7 경로로 추가)
        train_config: 학습 설정
        train_range: 학습 구간
        test_range: 시험 구간
        include_infections: 감염 면역을 E(d)에 가산할지 여부
    """

    def __init__(
        self,
        panel: RegionPanel,
        features: FeatureConfig,
        train_config: TrainConfig,
        train_range: DateRange,
        test_range: DateRange,
        include_infections: bool = True,
    ):
        if train_range.end >= test_range.start:
            raise ArgumentError(f"학습 구간 {train_range}이 시험 구간 {test_range}과 겹칩니다.")
        self.panel = panel
        if EFFECTIVENESS_COLUMN not in features.columns:
            features = FeatureConfig(
                features.paths + (("g7", (EFFECTIVENESS_COLUMN,)),), features.window_length, features.block_length
            )
        self.features = features
        self.train_config = train_config
        self.train_range = train_range
        self.test_range = test_range
        self.include_infections = include_infections

    def __call__(self, doses: DoseAdministrations, params: VaccinationParams) -> DailySeries:
        panel = self.panel
        dpc = panel.column("dpc") if self.include_infections else None
        effectiveness = population_effectiveness(doses, params.with_population(panel.population), panel.date_range, dpc)
        panel = panel.with_columns([effectiveness.series])
        networks = train_indicator_networks(panel, self.features, self.train_config, self.train_range, ("dpc",))
        origin = self.test_range.start - timedelta(days=1)
        blocks = math.ceil(len(self.test_range) / self.features.block_length)
        run = rolling_origin_forecast(networks, panel, origin, blocks)
        return run.series("dpc")


# ============================================
# Ablation / 입력 선택
# ============================================
class ForecastRunner:
    """
    피처 구성 하나로 학습 후 forecast_range를 예측해 대상 지표 시계열을 돌려준다

    mode가 rolling_origin이면 대상 지표 네트워크만, recurrent면 패널의 모든 지표 네트워크를 학습한다.
    """

    def __init__(
        self,
        panel: RegionPanel,
        train_config: TrainConfig,
        train_range: DateRange,
        forecast_range: DateRange,
        mode: str = "rolling_origin",
        target: str = "dpc",
    ):
        if mode not in EVALUATION_MODES:
            raise ArgumentError(f"알 수 없는 평가 방식: {mode} ({', '.join(EVALUATION_MODES)})")
        if train_range.end >= forecast_range.start:
            raise ArgumentError(f"학습 구간 {train_range}이 예측 구간 {forecast_range}과 겹칩니다.")
        self.panel = panel
        self.train_config = train_config
        self.train_range = train_range
        self.forecast_range = forecast_range
        self.mode = mode
        self.target = target

    def __call__(self, features: FeatureConfig) -> DailySeries:
        if self.mode == "rolling_origin":
            indicators: Tuple[str, ...] = (self.target,)
        else:
            indicators = tuple(ind for ind in INDICATORS if ind in self.panel)
        networks = train_indicator_networks(self.panel, features, self.train_config, self.train_range, indicators)
        origin = self.forecast_range.start - timedelta(days=1)
        blocks = math.ceil(len(self.forecast_range) / features.block_length)
        if self.mode == "rolling_origin":
            run = rolling_origin_forecast(networks, self.panel, origin, blocks)
        else:
            run = recurrent_rollout(networks, self.panel, origin, blocks)
        return run.series(self.target).slice(self.forecast_range)


@dataclass
class AblationResult:
    """
    단계(행) × 실행(열) 오차 행렬

    열 순서: Ex.1 … Ex.7 (추가 그룹이 있으면 Ex.<이름>), None, Opt.
    """
    errors: pd.DataFrame
    feature_sets: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    failed: Dict[str, str] = field(default_factory=dict)

    @property
    def runs(self) -> List[str]:
        return list(self.errors.columns)

    def delta(self, run: str, phase: str = "full") -> float:
        """기준(None) 대비 오차 변화"""
        return float(self.errors.loc[phase, run] - self.errors.loc[phase, BASELINE_RUN])


def _ablation_feature_sets(
    available: Sequence[str],
    groups: Sequence[int],
    extra_groups: Mapping[str, Sequence[str]],
    optimized_inputs: Sequence[str],
    window_length: int,
) -> Dict[str, FeatureConfig]:
    resolved = resolve_groups(groups)
    baseline = FeatureConfig.from_groups(available, groups, extra=extra_groups, window_length=window_length)
    sets: Dict[str, FeatureConfig] = {}
    for group in resolved:
        if not set(group.columns) & set(baseline.columns):
            logger.warning(f"그룹 {group.id}({group.name})의 컬럼이 패널에 없습니다. 제외해도 기준과 같습니다.")
        sets[f"Ex.{group.id}"] = baseline.without(group.columns)
    for name, columns in extra_groups.items():
        sets[f"Ex.{name}"] = baseline.without(columns)
    sets[BASELINE_RUN] = baseline
    if optimized_inputs:
        sets[OPTIMIZED_RUN] = FeatureConfig.from_groups(
            available, groups, include_only=optimized_inputs, window_length=window_length
        )
    return sets


def ablation_study(
    panel: RegionPanel,
    phases: PhaseSpec,
    runner: Optional[FeatureRunner] = None,
    groups: Sequence[int] = tuple(range(1, 8)),
    extra_groups: Optional[Mapping[str, Sequence[str]]] = None,
    optimized_inputs: Optional[Sequence[str]] = None,
    train_config: Optional[TrainConfig] = None,
    train_range: Optional[DateRange] = None,
    mode: str = "rolling_origin",
    target: str = "dpc",
    smoothing_window: int = 1,
    workers: int = 1,
) -> AblationResult:
    """
    그룹 하나씩 제외한 실행 + 전체 입력(None) + 최적 입력(Opt.)의 단계별 오차 행렬

    Args:
        panel: 지역 패널 (E(d), f̃ 포함)
        phases: spread/peak/decay/full 구간 (예측 구간 = full)
        runner: FeatureConfig → 대상 지표 예측 시계열 (None이면 ForecastRunner)
        groups: 대상 그룹 id
        extra_groups: 그룹 외 추가 제외 단위 {이름: 컬럼}
        optimized_inputs: Opt. 열 입력 컬럼 (None이면 설정 기본값, 빈 목록이면 생략)
        train_config, train_range: 기본 runner용 학습 설정/구간 (train_range 기본값: full 이전 전체)

    Raises:
        ArgumentError: 알 수 없는 그룹 id
    """
    extra_groups = dict(extra_groups or {})
    optimized_inputs = DEFAULT_OPTIMIZED_INPUTS if optimized_inputs is None else tuple(optimized_inputs)
    config = train_config or TrainConfig()
    sets = _ablation_feature_sets(panel.column_names, groups, extra_groups, optimized_inputs, config.window_length)
    if runner is None:
        train_range = train_range or DateRange(panel.date_range.start, phases.full.start - timedelta(days=1))
        runner = ForecastRunner(panel, config, train_range, phases.full, mode, target)
    actual = panel.column(target).slice(phases.full)

    def evaluate(name: str) -> Dict[str, float]:
        predicted = runner(sets[name]).slice(phases.full).renamed(target)
        reports = phase_errors(actual, predicted, phases, smoothing_window)
        return {phase: report.mean for phase, report in reports.items()}

    def safe(name: str):
        try:
            return evaluate(name)
        except Exception as exc:
            logger.error(f"ablation 실행 '{name}' 실패: {exc}", exc_info=True)
            return exc

    names = list(sets)
    results = _run_parallel(names, safe, workers)
    matrix = {}
    failed = {}
    for name in names:
        outcome = results[name]
        if isinstance(outcome, Exception):
            failed[name] = str(outcome)
            matrix[name] = {phase: math.nan for phase, _ in phases.items()}
        else:
            matrix[name] = outcome
    errors = pd.DataFrame(matrix, index=[phase for phase, _ in phases.items()], columns=names)
    logger.info(f"ablation 완료: 실행 {len(names)}개, 실패 {len(failed)}개")
    return AblationResult(errors, {name: sets[name].columns for name in names}, failed)


@dataclass
class InputSelection:
    """선택된 입력 컬럼과 점수, 평가 이력"""
    columns: Tuple[str, ...]
    score: float
    history: List[Tuple[Tuple[str, ...], float]] = field(default_factory=list)


def select_optimized_inputs(
    candidates: Mapping[object, Sequence[str]],
    score: Callable[[Tuple[str, ...]], float],
    required: Sequence[str] = (),
) -> InputSelection:
    """
    그룹마다 항목 하나를 탐욕적으로 고른 뒤 후진 제거

    1) 그룹 순서대로, 지금까지 고른 입력에 후보 하나를 더했을 때 점수가 가장 낮은 항목을 채택
    2) 항목 하나를 뺐을 때 점수가 나빠지지 않으면 가장 좋은 제거를 반복 적용

    Args:
        candidates: {그룹: 후보 컬럼 목록}
        score: 입력 컬럼 튜플 → 오차 (낮을수록 좋음)
        required: 항상 포함할 컬럼
    """
    cache: Dict[frozenset, float] = {}
    history: List[Tuple[Tuple[str, ...], float]] = []

    def evaluate(columns: Sequence[str]) -> float:
        key = frozenset(columns)
        if key not in cache:
            value = float(score(tuple(columns)))
            cache[key] = value if math.isfinite(value) else math.inf
            history.append((tuple(columns), cache[key]))
        return cache[key]

    selected: List[str] = list(dict.fromkeys(required))
    for group, columns in candidates.items():
        options = [c for c in columns if c not in selected]
        if not options:
            continue
        best = min(options, key=lambda c: (evaluate(selected + [c]), options.index(c)))
        selected.append(best)
        logger.debug(f"그룹 {group}: '{best}' 선택")

    current = evaluate(selected) if selected else math.inf
    while True:
        removable = [c for c in selected if c not in required]
        if len(selected) <= 1 or not removable:
            break
        trials = [(evaluate([x for x in selected if x != c]), i, c) for i, c in enumerate(removable)]
        value, _, column = min(trials)
        if value > current:
            break
        selected.remove(column)
        current = value
        logger.debug(f"후진 제거: '{column}' (점수 {value:.4f})")
    logger.info(f"최적 입력 선택: {selected} (점수 {current:.4f}, 평가 {len(cache)}회)")
    return InputSelection(tuple(selected), current, history)


def forecast_scorer(
    panel: RegionPanel,
    runner: FeatureRunner,
    evaluation_range: DateRange,
    target: str = "dpc",
    window_length: Optional[int] = None,
    smoothing_window: int = 1,
) -> Callable[[Tuple[str, ...]], float]:
    """입력 컬럼 튜플 → 학습/예측 → 평가 구간 상대 오차"""
    actual = panel.column(target).slice(evaluation_range)
    window_length = window_length or TrainConfig().window_length

    def score(columns: Tuple[str, ...]) -> float:
        features = FeatureConfig.from_groups(panel.column_names, include_only=columns, window_length=window_length)
        predicted = runner(features).slice(evaluation_range).renamed(target)
        return relative_error(actual, predicted, smoothing_window).mean

    return score


def group_candidates(panel: RegionPanel, groups: Sequence[int] = tuple(range(1, 8))) -> Dict[int, Tuple[str, ...]]:
    """그룹별 패널에 존재하는 후보 컬럼"""
    available = set(panel.column_names)
    return {
        group.id: tuple(c for c in group.columns if c in available)
        for group in resolve_groups(groups)
        if any(c in available for c in group.columns)
    }


def evaluate_series(
    actual: DailySeries,
    predicted: DailySeries,
    phases: Optional[PhaseSpec] = None,
    smoothing_window: int = 1,
) -> Dict[str, ErrorReport]:
    """
    겹치는 구간의 전체 오차("full")와, phases가 주어지면 단계별 오차

    Raises:
        ArgumentError: 두 시계열이 겹치지 않을 때
    """
    if not actual.date_range.overlaps(predicted.date_range):
        raise ArgumentError(f"관측 {actual.date_range}와 예측 {predicted.date_range}가 겹치지 않습니다.")
    if phases is not None:
        return phase_errors(actual, predicted.renamed(actual.name), phases, smoothing_window)
    common = DateRange(
        max(actual.start_date, predicted.start_date),
        min(actual.end_date, predicted.end_date),
    )
    return {"full": relative_error(actual.slice(common), predicted.slice(common).renamed(actual.name),
                                   smoothing_window)}
