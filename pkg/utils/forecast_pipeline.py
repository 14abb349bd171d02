"""
예측 파이프라인
학습 윈도우 구성 → 지표별 네트워크(DPC/SC/HC/DC/CC) 학습 → 14일 블록 재귀 예측 → 적응(adaptation) 보정
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.adaptation_network import AdaptationNet
from models.lstm_network import BLOCK_LENGTH, MultiPathNet, PathSpec
from models.training import DEFAULT_WINDOW_LENGTH, TrainConfig, TrainReport, ensemble_band, train
from utils.config import get_default
from utils.dataset_groups import INDICATORS, count_columns, group_of_column, resolve_groups
from utils.errors import ArgumentError, DataError
from utils.metrics import mean_relative_error
from utils.timeseries import DailySeries, DateRange, RegionPanel, Scaler, minmax_normalize
from utils.vaccination import EFFECTIVENESS_COLUMN
from utils.variant import VARIANT_COLUMN

logger = logging.getLogger(__name__)

_ADAPTATION_DEFAULTS = get_default("adaptation", default={})
BAND_METHOD = "seed ensemble, 2.5/97.5 percentile"


# ============================================
# 피처 구성 / 윈도우
# ============================================
@dataclass(frozen=True)
class FeatureConfig:
    """
    입력 피처 구성: 경로(이름, 컬럼 목록)의 순서가 곧 입력 컬럼 순서

    Args:
        paths: ((경로 이름, (컬럼, ...)), ...)
        window_length: 입력 일수 W
        block_length: 예측 블록 길이
    """
    paths: Tuple[Tuple[str, Tuple[str, ...]], ...]
    window_length: int = DEFAULT_WINDOW_LENGTH
    block_length: int = BLOCK_LENGTH

    def __post_init__(self):
        paths = tuple((str(name), tuple(cols)) for name, cols in self.paths if cols)
        if not paths:
            raise ArgumentError("입력 피처가 하나도 없습니다.")
        columns = [c for _, cols in paths for c in cols]
        if len(set(columns)) != len(columns):
            raise ArgumentError(f"피처 컬럼이 중복되었습니다: {columns}")
        if self.window_length < 1 or self.block_length < 1:
            raise ArgumentError("window_length/block_length는 1 이상이어야 합니다.")
        object.__setattr__(self, "paths", paths)

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(c for _, cols in self.paths for c in cols)

    @property
    def path_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.paths)

    def path_specs(self, hidden_size: int, depth: int = 1) -> List[PathSpec]:
        specs = []
        offset = 0
        for name, cols in self.paths:
            specs.append(PathSpec(name, tuple(range(offset, offset + len(cols))), hidden_size, depth))
            offset += len(cols)
        return specs

    def without(self, columns: Iterable[str]) -> "FeatureConfig":
        drop = set(columns)
        return FeatureConfig(
            tuple((name, tuple(c for c in cols if c not in drop)) for name, cols in self.paths),
            self.window_length,
            self.block_length,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "paths": [[name, list(cols)] for name, cols in self.paths],
            "window_length": self.window_length,
            "block_length": self.block_length,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FeatureConfig":
        return cls(
            tuple((name, tuple(cols)) for name, cols in data["paths"]),
            int(data.get("window_length", DEFAULT_WINDOW_LENGTH)),
            int(data.get("block_length", BLOCK_LENGTH)),
        )

    @classmethod
    def from_groups(
        cls,
        available: Iterable[str],
        group_ids: Iterable[int] = range(1, 8),
        extra: Optional[Mapping[str, Sequence[str]]] = None,
        include_only: Optional[Iterable[str]] = None,
        window_length: int = DEFAULT_WINDOW_LENGTH,
    ) -> "FeatureConfig":
        """
        데이터셋 그룹별로 경로 하나씩 구성 (패널에 있는 컬럼만)

        Args:
            available: 사용 가능한 컬럼 이름
            group_ids: 사용할 그룹 id
            extra: 그룹 외 추가 경로 {경로 이름: 컬럼 목록}
            include_only: 지정 시 이 컬럼들만 사용
        """
        available = set(available)
        allowed = set(include_only) if include_only is not None else None
        paths = []
        for group in resolve_groups(group_ids):
            cols = tuple(
                c for c in group.columns
                if c in available and (allowed is None or c in allowed)
            )
            if cols:
                paths.append((f"g{group.id}", cols))
        for name, cols in (extra or {}).items():
            missing = [c for c in cols if c not in available]
            if missing:
                raise DataError(f"추가 경로 '{name}'의 컬럼이 패널에 없습니다: {missing}")
            paths.append((name, tuple(cols)))
        return cls(tuple(paths), window_length)


def blind_features(features: FeatureConfig) -> FeatureConfig:
    """백신 효과 입력을 뺀 피처 구성 (적응 모델 학습용 네트워크)"""
    return features.without([EFFECTIVENESS_COLUMN])


def fit_scalers(panel: RegionPanel, columns: Iterable[str], fit_range: Optional[DateRange] = None) -> Dict[str, Scaler]:
    """학습 구간만으로 컬럼별 min-max Scaler 적합"""
    scalers = {}
    for column in dict.fromkeys(columns):
        _, scalers[column] = minmax_normalize(panel.column(column), fit_range)
    return scalers


def normalize_matrix(raw: np.ndarray, columns: Sequence[str], scalers: Mapping[str, Scaler]) -> np.ndarray:
    out = np.empty_like(raw, dtype=float)
    for j, column in enumerate(columns):
        scaler = scalers.get(column)
        if scaler is None:
            raise DataError(f"'{column}' 컬럼의 Scaler가 없습니다.")
        out[:, j] = scaler.transform(raw[:, j])
    return out


@dataclass(frozen=True)
class TrainingWindow:
    """(W × F 입력, 블록 길이 타깃) 학습 샘플, origin은 첫 타깃일"""
    origin: date
    inputs: np.ndarray
    target: np.ndarray

    def as_pair(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.inputs, self.target


def build_windows(
    panel: RegionPanel,
    features: FeatureConfig,
    target: str,
    window_length: Optional[int] = None,
    scalers: Optional[Mapping[str, Scaler]] = None,
    fit_range: Optional[DateRange] = None,
) -> List[TrainingWindow]:
    """
    stride 1 슬라이딩 윈도우 생성, 개수 = 패널 길이 − W − 블록 길이 + 1

    Raises:
        DataError: 패널이 W + 블록 길이보다 짧거나 컬럼이 없을 때
    """
    W = window_length or features.window_length
    L = features.block_length
    required = W + L
    if len(panel) < required:
        raise DataError(f"패널 길이 {len(panel)}일이 필요 길이 {required}일(W={W} + {L})보다 짧습니다.")
    columns = features.columns
    if scalers is None:
        scalers = fit_scalers(panel, list(columns) + [target], fit_range)
    inputs = normalize_matrix(panel.values(columns), columns, scalers)
    if target not in scalers:
        raise DataError(f"타깃 '{target}'의 Scaler가 없습니다.")
    targets = scalers[target].transform(panel.column(target).values)
    windows = []
    for s in range(len(panel) - W - L + 1):
        windows.append(TrainingWindow(
            panel.date_range.start + timedelta(days=s + W),
            inputs[s:s + W].copy(),
            targets[s + W:s + W + L].copy(),
        ))
    return windows


# ============================================
# 지표별 네트워크 학습
# ============================================
def member_seed(seed: int, indicator: str, member: int) -> int:
    digest = hashlib.sha256(f"{seed}:{indicator}:{member}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class IndicatorNetworks:
    """지표별 학습된 네트워크(앙상블 멤버)와 공유 Scaler"""
    features: FeatureConfig
    scalers: Dict[str, Scaler]
    nets: Dict[str, List[Any]]
    train_config: TrainConfig
    reports: Dict[str, List[TrainReport]] = field(default_factory=dict)

    @property
    def indicators(self) -> Tuple[str, ...]:
        return tuple(self.nets)

    def save(self, directory: Union[str, Path]) -> List[Path]:
        """지표/멤버별 체크포인트 저장"""
        directory = Path(directory)
        paths = []
        for indicator, members in self.nets.items():
            for m, net in enumerate(members):
                report = self.reports.get(indicator, [])
                metadata = {
                    "indicator": indicator,
                    "member": m,
                    "features": self.features.to_dict(),
                    "scalers": {c: s.to_dict() for c, s in self.scalers.items()},
                    "train_config": self.train_config.to_dict(),
                    "report": report[m].to_dict() if m < len(report) else {},
                }
                paths.append(net.save(directory / f"{indicator}_m{m}.npz", metadata))
        return paths

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "IndicatorNetworks":
        directory = Path(directory)
        files = sorted(directory.glob("*_m*.npz"))
        if not files:
            raise DataError(f"체크포인트가 없습니다: {directory}")
        nets: Dict[str, Dict[int, MultiPathNet]] = {}
        metadata: Dict[str, Any] = {}
        for path in files:
            net, metadata = MultiPathNet.load(path)
            nets.setdefault(metadata["indicator"], {})[int(metadata["member"])] = net
        order = [ind for ind in INDICATORS if ind in nets] + sorted(set(nets) - set(INDICATORS))
        ordered = {ind: [nets[ind][m] for m in sorted(nets[ind])] for ind in order}
        return cls(
            FeatureConfig.from_dict(metadata["features"]),
            {c: Scaler.from_dict(s) for c, s in metadata["scalers"].items()},
            ordered,
            TrainConfig(**metadata["train_config"]),
        )


def train_indicator_networks(
    panel: RegionPanel,
    features: FeatureConfig,
    config: TrainConfig,
    fit_range: Optional[DateRange] = None,
    indicators: Sequence[str] = INDICATORS,
    workers: int = 1,
) -> IndicatorNetworks:
    """
    지표마다 네트워크 하나(앙상블이면 여러 개)를 학습

    Args:
        panel: 지역 패널
        features: 입력 피처 구성
        config: 학습 설정 (seed 포함)
        fit_range: 학습/Scaler 적합 구간 (None이면 패널 전체)
        indicators: 학습할 지표
        workers: 병렬 학습 스레드 수

    Raises:
        DataError: 지표 컬럼이 패널에 없을 때
    """
    missing = [ind for ind in indicators if ind not in panel]
    if missing:
        raise DataError(f"패널 '{panel.region_id}'에 지표 컬럼이 없습니다: {missing}")
    train_panel = panel.slice(fit_range) if fit_range else panel
    scalers = fit_scalers(train_panel, list(features.columns) + list(indicators))
    windows = {
        ind: [w.as_pair() for w in build_windows(train_panel, features, ind, config.window_length, scalers)]
        for ind in indicators
    }
    specs = features.path_specs(config.hidden_size, config.depth)
    jobs = [(ind, m) for ind in indicators for m in range(config.ensemble)]

    def run(job: Tuple[str, int]) -> Tuple[MultiPathNet, TrainReport]:
        ind, m = job
        seed = member_seed(config.seed, ind, m)
        net = MultiPathNet(specs, len(features.columns), features.block_length, seed=seed)
        return train(net, windows[ind], config.with_overrides(seed=seed), label=f"{ind}[{m}]")

    logger.info(f"지표 네트워크 학습 시작: {list(indicators)} × {config.ensemble}, 피처 {len(features.columns)}개")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    nets: Dict[str, List[Any]] = {ind: [] for ind in indicators}
    reports: Dict[str, List[TrainReport]] = {ind: [] for ind in indicators}
    for (ind, _), (net, report) in zip(jobs, results):
        nets[ind].append(net)
        reports[ind].append(report)
    return IndicatorNetworks(features, scalers, nets, config, reports)


# ============================================
# 예측 블록 / 실행 결과
# ============================================
@dataclass(frozen=True, eq=False)
class ForecastBlock:
    """지표 하나의 14일 예측 블록 (앙상블 밴드 선택)"""
    indicator: str
    start_date: date
    values: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    adapted: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (BLOCK_LENGTH,):
            raise ArgumentError(f"예측 블록은 {BLOCK_LENGTH}일이어야 합니다: {values.shape}")
        if self.indicator in count_columns() and np.any(values < 0):
            raise DataError(f"건수 지표 '{self.indicator}' 예측에 음수가 있습니다.")
        object.__setattr__(self, "values", values)
        for name in ("lower", "upper"):
            band = getattr(self, name)
            if band is not None:
                object.__setattr__(self, name, np.array(band, dtype=float))

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=BLOCK_LENGTH - 1)

    @property
    def date_range(self) -> DateRange:
        return DateRange(self.start_date, self.end_date)


def predict_block(
    nets: Union[Any, Sequence[Any]],
    window: np.ndarray,
    scaler: Optional[Scaler],
    indicator: str,
    start_date: date,
) -> ForecastBlock:
    """
    정규화된 입력 윈도우 → 역정규화된 14일 블록

    앙상블이면 멤버 평균을 값으로, 2.5/97.5 백분위를 밴드로 쓴다.
    건수 지표는 역정규화 후 0 미만을 0으로 제한한다.

    Raises:
        ArgumentError: Scaler가 없거나 출력 길이가 블록 길이와 다를 때
    """
    if scaler is None:
        raise ArgumentError(f"'{indicator}' 지표의 Scaler가 없습니다.")
    members = list(nets) if isinstance(nets, (list, tuple)) else [nets]
    outputs = np.stack([np.asarray(net.forward(window), dtype=float) for net in members])
    if outputs.shape[1] != BLOCK_LENGTH:
        raise ArgumentError(f"네트워크 출력 길이 {outputs.shape[1]}가 블록 길이 {BLOCK_LENGTH}와 다릅니다.")
    values = scaler.inverse(outputs)
    if indicator in count_columns():
        values = np.maximum(values, 0.0)
    lower = upper = None
    if len(members) > 1:
        lower, upper = ensemble_band(values)
    return ForecastBlock(indicator, start_date, values.mean(axis=0), lower, upper)


@dataclass(frozen=True, eq=False)
class ForecastRun:
    """
    지역 하나의 연속 예측 블록 묶음

    origin은 마지막 관측일, 첫 블록은 origin 다음날 시작한다.
    unadapted는 적응 보정 전 블록 (적응하지 않았으면 None)
    """
    region_id: str
    origin: date
    blocks: Mapping[str, Tuple[ForecastBlock, ...]]
    metadata: Mapping[str, Any] = field(default_factory=dict)
    unadapted: Optional[Mapping[str, Tuple[ForecastBlock, ...]]] = None

    def __post_init__(self):
        blocks = {ind: tuple(bs) for ind, bs in self.blocks.items()}
        for ind, bs in blocks.items():
            expected = self.origin + timedelta(days=1)
            for k, block in enumerate(bs):
                if block.start_date != expected:
                    raise DataError(f"'{ind}' 블록 {k}의 시작일 {block.start_date}이 {expected}와 연속되지 않습니다.")
                expected = block.start_date + timedelta(days=BLOCK_LENGTH)
        object.__setattr__(self, "blocks", blocks)
        if self.unadapted is not None:
            object.__setattr__(self, "unadapted", {ind: tuple(bs) for ind, bs in self.unadapted.items()})

    @property
    def indicators(self) -> Tuple[str, ...]:
        return tuple(self.blocks)

    @property
    def n_blocks(self) -> int:
        return max((len(bs) for bs in self.blocks.values()), default=0)

    @property
    def horizon(self) -> DateRange:
        return DateRange.from_length(self.origin + timedelta(days=1), self.n_blocks * BLOCK_LENGTH)

    def series(self, indicator: str, unadapted: bool = False) -> DailySeries:
        source = self.unadapted if (unadapted and self.unadapted is not None) else self.blocks
        if indicator not in source:
            raise ArgumentError(f"예측 결과에 '{indicator}' 지표가 없습니다.")
        values = np.concatenate([b.values for b in source[indicator]])
        return DailySeries(indicator, self.origin + timedelta(days=1), values)

    def to_frame(self, unadapted: bool = False) -> pd.DataFrame:
        """date, indicator, value, lower, upper, adapted 행 목록"""
        source = self.unadapted if (unadapted and self.unadapted is not None) else self.blocks
        rows = []
        for ind, bs in source.items():
            for block in bs:
                for offset, value in enumerate(block.values):
                    rows.append({
                        "date": (block.start_date + timedelta(days=offset)).isoformat(),
                        "indicator": ind,
                        "value": float(value),
                        "lower": float(block.lower[offset]) if block.lower is not None else None,
                        "upper": float(block.upper[offset]) if block.upper is not None else None,
                        "adapted": bool(block.adapted),
                    })
        return pd.DataFrame(rows, columns=["date", "indicator", "value", "lower", "upper", "adapted"])


# ============================================
# 외생 변수 미래 값 정책
# ============================================
class ExogenousPolicy(str, Enum):
    PROVIDED = "provided"
    HOLD_LAST_PATTERN = "hold_last_pattern"
    HOLD_LAST_VALUE = "hold_last_value"
    PROJECTED = "projected"


@dataclass
class ExogenousFutures:
    """
    예측 구간 동안 외생 피처를 어떻게 채울지에 대한 정책과 값

    provided/projected 정책은 series에 원 단위 DailySeries가 있어야 한다.
    """
    policies: Dict[str, ExogenousPolicy] = field(default_factory=dict)
    series: Dict[str, DailySeries] = field(default_factory=dict)

    def with_policy(self, column: str, policy: Union[ExogenousPolicy, str],
                    series: Optional[DailySeries] = None) -> "ExogenousFutures":
        policies = dict(self.policies)
        values = dict(self.series)
        policies[column] = ExogenousPolicy(policy)
        if series is not None:
            values[column] = series
        return ExogenousFutures(policies, values)

    def future_values(self, column: str, history: np.ndarray, start: date, days: int, pattern_length: int) -> np.ndarray:
        """
        start부터 days일의 미래 값

        Raises:
            ArgumentError: 정책이 없을 때
            DataError: provided/projected 값이 예측 구간을 덮지 못할 때
        """
        policy = self.policies.get(column)
        if policy is None:
            raise ArgumentError(f"외생 피처 '{column}'의 미래 값 정책이 없습니다.")
        if policy in (ExogenousPolicy.PROVIDED, ExogenousPolicy.PROJECTED):
            series = self.series.get(column)
            horizon = DateRange.from_length(start, days)
            if series is None or not series.date_range.covers(horizon):
                raise DataError(f"외생 피처 '{column}'의 {policy.value} 값이 예측 구간 {horizon}을 덮지 않습니다.")
            return np.array(series.slice(horizon).values)
        if policy is ExogenousPolicy.HOLD_LAST_VALUE:
            return np.full(days, float(history[-1]))
        pattern = np.asarray(history[-pattern_length:], dtype=float)
        return np.resize(pattern, days)

    @classmethod
    def defaults(
        cls,
        features: FeatureConfig,
        predicted: Iterable[str] = INDICATORS,
        projected: Optional[Mapping[str, DailySeries]] = None,
        provided: Optional[Mapping[str, DailySeries]] = None,
    ) -> "ExogenousFutures":
        """
        기본 정책: 이동/기상/라벨/행동 데이터는 최근 14일 패턴 반복,
        변이 지수와 백신 효과는 projected 값이 있으면 사용하고 없으면 마지막 값 유지
        """
        predicted = set(predicted)
        projected = dict(projected or {})
        provided = dict(provided or {})
        policies: Dict[str, ExogenousPolicy] = {}
        series: Dict[str, DailySeries] = {}
        for column in features.columns:
            if column in predicted:
                continue
            if column in provided:
                policies[column] = ExogenousPolicy.PROVIDED
                series[column] = provided[column]
            elif column in projected:
                policies[column] = ExogenousPolicy.PROJECTED
                series[column] = projected[column]
            else:
                group = group_of_column(column)
                if group in (5, 7):
                    policies[column] = ExogenousPolicy.HOLD_LAST_VALUE
                elif group is not None:
                    policies[column] = ExogenousPolicy.HOLD_LAST_PATTERN
        return cls(policies, series)


# ============================================
# 적응(adaptation) 모델
# ============================================
@dataclass(frozen=True)
class AdaptationConfig:
    hidden_size: int = int(_ADAPTATION_DEFAULTS.get("hidden_size", 16))
    learning_rate: float = float(_ADAPTATION_DEFAULTS.get("learning_rate", 0.01))
    epochs: int = int(_ADAPTATION_DEFAULTS.get("epochs", 300))
    batch_size: int = 32
    stride: int = int(_ADAPTATION_DEFAULTS.get("stride", 7))
    validation_fraction: float = float(_ADAPTATION_DEFAULTS.get("validation_fraction", 0.2))
    adapt_in_loop: bool = bool(_ADAPTATION_DEFAULTS.get("adapt_in_loop", True))
    indicators: Tuple[str, ...] = tuple(_ADAPTATION_DEFAULTS.get("indicators", ("dpc",)))
    seed: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ArgumentError(f"stride는 1 이상이어야 합니다: {self.stride}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ArgumentError(f"validation_fraction은 [0, 1) 범위여야 합니다: {self.validation_fraction}")
        object.__setattr__(self, "indicators", tuple(self.indicators))


@dataclass
class AdaptationModel:
    """예측 블록을 (원시 예측, E, f̃)로 보정하는 전역 네트워크"""
    net: AdaptationNet
    indicators: Tuple[str, ...] = ("dpc",)
    report: Optional[TrainReport] = None
    validation: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def identity(cls, hidden_size: int = 16, indicators: Sequence[str] = ("dpc",)) -> "AdaptationModel":
        """학습 전(항등) 모델"""
        return cls(AdaptationNet(hidden_size), tuple(indicators))

    def adapt_values(self, raw: np.ndarray, effectiveness: np.ndarray, infectivity: np.ndarray) -> np.ndarray:
        inputs = AdaptationNet.stack_inputs(raw, effectiveness, infectivity)
        return self.net.adapt(inputs)[0]

    def adapt_block(self, block: ForecastBlock, effectiveness: np.ndarray, infectivity: np.ndarray) -> ForecastBlock:
        values = self.adapt_values(block.values, effectiveness, infectivity)
        lower = self.adapt_values(block.lower, effectiveness, infectivity) if block.lower is not None else None
        upper = self.adapt_values(block.upper, effectiveness, infectivity) if block.upper is not None else None
        return ForecastBlock(block.indicator, block.start_date, values, lower, upper, adapted=True)

    def save(self, path: Union[str, Path]) -> Path:
        return self.net.save(path, {"indicators": list(self.indicators), "validation": self.validation})

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AdaptationModel":
        net, metadata = AdaptationNet.load(path)
        return cls(net, tuple(metadata.get("indicators", ("dpc",))), None, dict(metadata.get("validation", {})))


def fit_adaptation(
    raw_blocks: np.ndarray,
    effectiveness_blocks: np.ndarray,
    infectivity_blocks: np.ndarray,
    observed_blocks: np.ndarray,
    config: Optional[AdaptationConfig] = None,
) -> AdaptationModel:
    """
    (원시 예측, E, f̃) → 관측 블록 학습

    마지막 validation_fraction 비율의 블록은 검증용으로 남기고 raw/adapted 오차를 기록한다.

    Raises:
        ArgumentError: 블록이 없거나 형태가 다를 때
    """
    config = config or AdaptationConfig()
    raw = np.atleast_2d(np.asarray(raw_blocks, dtype=float))
    eff = np.atleast_2d(np.asarray(effectiveness_blocks, dtype=float))
    inf = np.atleast_2d(np.asarray(infectivity_blocks, dtype=float))
    obs = np.atleast_2d(np.asarray(observed_blocks, dtype=float))
    if raw.size == 0:
        raise ArgumentError("적응 학습 블록이 비어 있습니다.")
    if not (raw.shape == eff.shape == inf.shape == obs.shape):
        raise ArgumentError(f"적응 학습 블록 형태가 다릅니다: {raw.shape}, {eff.shape}, {inf.shape}, {obs.shape}")
    n = len(raw)
    n_val = int(n * config.validation_fraction) if n > 1 else 0
    n_train = n - n_val
    log_scale = float(np.log1p(max(float(raw.max()), float(obs.max()), 1.0)))
    net = AdaptationNet(config.hidden_size, log_scale, seed=config.seed)
    inputs = AdaptationNet.stack_inputs(raw, eff, inf)
    windows = [(inputs[i], obs[i]) for i in range(n_train)]
    train_config = TrainConfig(
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
        seed=config.seed,
        optimizer="adam",
    )
    net, report = train(net, windows, train_config, label="adaptation")
    model = AdaptationModel(net, config.indicators, report)
    if n_val:
        adapted = net.adapt(inputs[n_train:])
        model.validation = {
            "blocks": float(n_val),
            "raw_error": mean_relative_error(obs[n_train:], raw[n_train:]),
            "adapted_error": mean_relative_error(obs[n_train:], adapted),
        }
        logger.info(
            f"적응 모델 검증: 블록 {n_val}개, 원시 오차 {model.validation['raw_error']:.4f} → "
            f"보정 오차 {model.validation['adapted_error']:.4f}"
        )
    return model


def _normalized_window(networks: IndicatorNetworks, raw: np.ndarray) -> np.ndarray:
    return normalize_matrix(raw, networks.features.columns, networks.scalers)


def train_adaptation(
    external: RegionPanel,
    blind_networks: IndicatorNetworks,
    config: Optional[AdaptationConfig] = None,
) -> AdaptationModel:
    """
    외부(고접종) 지역에서 백신 입력 없이 학습된 네트워크의 예측을 관측에 맞추도록 적응 모델 학습

    origin을 stride 간격으로 옮기며 (blind 예측, E, f̃, 관측) 블록을 만든다.

    Raises:
        DataError: 외부 패널에 E(d) 컬럼이 없을 때
        ArgumentError: 네트워크가 백신 효과를 입력으로 쓸 때
    """
    config = config or AdaptationConfig()
    if EFFECTIVENESS_COLUMN not in external:
        raise DataError(f"외부 지역 패널 '{external.region_id}'에 '{EFFECTIVENESS_COLUMN}' 컬럼이 없습니다.")
    if EFFECTIVENESS_COLUMN in blind_networks.features.columns:
        raise ArgumentError("적응 모델 학습에는 백신 효과 입력 없이 학습된 네트워크가 필요합니다.")
    features = blind_networks.features
    W, L = features.window_length, features.block_length
    raw_matrix = external.values(features.columns)
    eff = external.column(EFFECTIVENESS_COLUMN).values
    inf = external.column(VARIANT_COLUMN).values if VARIANT_COLUMN in external else np.zeros(len(external))
    raw_blocks, eff_blocks, inf_blocks, obs_blocks = [], [], [], []
    indicator = config.indicators[0]
    for end in range(W, len(external) - L + 1, config.stride):
        window = _normalized_window(blind_networks, raw_matrix[end - W:end])
        start = external.date_range.start + timedelta(days=end)
        block = predict_block(blind_networks.nets[indicator], window, blind_networks.scalers.get(indicator),
                              indicator, start)
        raw_blocks.append(block.values)
        eff_blocks.append(eff[end:end + L])
        inf_blocks.append(inf[end:end + L])
        obs_blocks.append(external.column(indicator).values[end:end + L])
    if not raw_blocks:
        raise DataError(f"외부 지역 패널이 너무 짧습니다: {len(external)}일 (필요 {W + L}일)")
    logger.info(f"적응 학습 블록 {len(raw_blocks)}개 구성 (stride {config.stride})")
    return fit_adaptation(np.array(raw_blocks), np.array(eff_blocks), np.array(inf_blocks), np.array(obs_blocks),
                          config)


def _channel(series: Optional[DailySeries], horizon: DateRange, default: Optional[float], name: str) -> np.ndarray:
    if series is None:
        if default is None:
            raise ArgumentError(f"적응 입력 '{name}'이 없습니다.")
        return np.full(len(horizon), default)
    if not series.date_range.covers(horizon):
        raise ArgumentError(f"적응 입력 '{name}'의 범위 {series.date_range}가 예측 구간 {horizon}을 덮지 않습니다.")
    return np.array(series.slice(horizon).values)


def apply_adaptation(
    model: AdaptationModel,
    run: ForecastRun,
    effectiveness: DailySeries,
    infectivity: Optional[DailySeries] = None,
) -> ForecastRun:
    """
    적응 대상 지표의 블록을 보정 결과로 교체 (나머지 지표는 그대로)

    Raises:
        ArgumentError: E/f̃가 예측 구간을 덮지 않을 때
    """
    horizon = run.horizon
    eff = _channel(effectiveness, horizon, None, EFFECTIVENESS_COLUMN)
    inf = _channel(infectivity, horizon, 0.0, VARIANT_COLUMN)
    blocks = dict(run.blocks)
    for indicator in model.indicators:
        if indicator not in blocks:
            continue
        adapted = []
        for k, block in enumerate(blocks[indicator]):
            sl = slice(k * BLOCK_LENGTH, (k + 1) * BLOCK_LENGTH)
            adapted.append(model.adapt_block(block, eff[sl], inf[sl]))
        blocks[indicator] = tuple(adapted)
    metadata = dict(run.metadata)
    metadata["adapted"] = True
    metadata["adapt_in_loop"] = False
    return ForecastRun(run.region_id, run.origin, blocks, metadata, unadapted=run.blocks)


# ============================================
# 재귀 예측 / rolling-origin 평가
# ============================================
def _history(panel: RegionPanel, origin: date) -> RegionPanel:
    if origin not in panel.date_range:
        raise ArgumentError(f"예측 기준일 {origin}이 패널 범위 {panel.date_range} 밖입니다.")
    return panel.slice(DateRange(panel.date_range.start, origin))


def _run_metadata(networks: IndicatorNetworks, panel: RegionPanel, origin: date, blocks: int, mode: str) -> Dict[str, Any]:
    return {
        "region_id": panel.region_id,
        "origin": origin.isoformat(),
        "blocks": blocks,
        "mode": mode,
        "seed": networks.train_config.seed,
        "ensemble": max((len(m) for m in networks.nets.values()), default=0),
        "band_method": BAND_METHOD,
        "feature_columns": list(networks.features.columns),
    }


def recurrent_rollout(
    networks: IndicatorNetworks,
    panel: RegionPanel,
    origin: date,
    blocks: int,
    exogenous: Optional[ExogenousFutures] = None,
    adaptation: Optional[AdaptationModel] = None,
    adaptation_inputs: Optional[Tuple[DailySeries, Optional[DailySeries]]] = None,
    adapt_in_loop: Optional[bool] = None,
) -> ForecastRun:
    """
    origin까지의 관측으로 첫 블록을 예측하고, 이후 블록은 앞선 예측을 입력 윈도우에 다시 넣어 예측

    모든 지표를 블록마다 함께 전진시킨다. origin 이후의 관측값은 읽지 않는다.

    Args:
        networks: 지표별 네트워크
        panel: 지역 패널 (origin 이후 구간은 무시)
        origin: 마지막 관측일 d₀
        blocks: 블록 수 B
        exogenous: 외생 피처 정책 (None이면 기본 정책)
        adaptation: 적응 모델 (선택)
        adaptation_inputs: 예측 구간의 (E, f̃) 시계열
        adapt_in_loop: True면 블록마다 보정 후 다음 입력에 사용, False면 마지막에 한 번 보정

    Raises:
        ArgumentError: 블록 수가 1 미만이거나 외생 피처 정책이 없을 때
        DataError: origin까지의 관측이 W일보다 짧을 때
    """
    if blocks < 1:
        raise ArgumentError(f"블록 수는 1 이상이어야 합니다: {blocks}")
    features = networks.features
    W, L = features.window_length, features.block_length
    history = _history(panel, origin)
    if len(history) < W:
        raise DataError(f"기준일까지의 관측 {len(history)}일이 입력 윈도우 {W}일보다 짧습니다.")
    columns = features.columns
    predicted = set(networks.indicators)
    exogenous = exogenous or ExogenousFutures.defaults(features, predicted)
    horizon_days = blocks * L
    first_day = origin + timedelta(days=1)

    future = np.full((horizon_days, len(columns)), np.nan)
    for j, column in enumerate(columns):
        if column in predicted:
            continue
        future[:, j] = exogenous.future_values(column, history.column(column).values, first_day, horizon_days, L)
    extended = np.vstack([history.values(columns), future])
    n_hist = len(history)

    if adapt_in_loop is None:
        adapt_in_loop = AdaptationConfig().adapt_in_loop
    horizon = DateRange.from_length(first_day, horizon_days)
    eff_future = inf_future = None
    if adaptation is not None:
        eff_series, inf_series = adaptation_inputs if adaptation_inputs else (None, None)
        eff_future = _channel(eff_series, horizon, None, EFFECTIVENESS_COLUMN)
        inf_future = _channel(inf_series, horizon, 0.0, VARIANT_COLUMN)
    in_loop = adaptation is not None and adapt_in_loop

    out: Dict[str, List[ForecastBlock]] = {ind: [] for ind in networks.indicators}
    raw_out: Dict[str, List[ForecastBlock]] = {ind: [] for ind in networks.indicators}
    for k in range(blocks):
        end = n_hist + k * L
        window = _normalized_window(networks, extended[end - W:end])
        start = first_day + timedelta(days=k * L)
        for ind in networks.indicators:
            block = predict_block(networks.nets[ind], window, networks.scalers.get(ind), ind, start)
            raw_out[ind].append(block)
            if in_loop and ind in adaptation.indicators:
                sl = slice(k * L, (k + 1) * L)
                block = adaptation.adapt_block(block, eff_future[sl], inf_future[sl])
            out[ind].append(block)
            if ind in columns:
                extended[end:end + L, columns.index(ind)] = block.values
        logger.debug(f"블록 {k + 1}/{blocks} 예측 완료: {start} ~ {start + timedelta(days=L - 1)}")

    metadata = _run_metadata(networks, panel, origin, blocks, "recurrent")
    metadata["adapted"] = in_loop
    metadata["adapt_in_loop"] = in_loop
    run = ForecastRun(panel.region_id, origin, out, metadata, unadapted=raw_out if in_loop else None)
    if adaptation is not None and not in_loop:
        run = apply_adaptation(adaptation, run, adaptation_inputs[0], adaptation_inputs[1])
    logger.info(f"재귀 예측 완료: {panel.region_id}, 기준일 {origin}, {blocks}블록")
    return run


def rolling_origin_forecast(
    networks: IndicatorNetworks,
    panel: RegionPanel,
    origin: date,
    blocks: int,
) -> ForecastRun:
    """
    블록 k를 origin + 14k일까지의 실제 관측으로 예측 (예측값을 다시 넣지 않음)

    Raises:
        ArgumentError: 패널이 마지막 블록 기준일을 덮지 않을 때
    """
    if blocks < 1:
        raise ArgumentError(f"블록 수는 1 이상이어야 합니다: {blocks}")
    features = networks.features
    W, L = features.window_length, features.block_length
    last_origin = origin + timedelta(days=(blocks - 1) * L)
    if last_origin not in panel.date_range:
        raise ArgumentError(f"패널 범위 {panel.date_range}가 마지막 블록 기준일 {last_origin}을 덮지 않습니다.")
    raw = panel.values(features.columns)
    out: Dict[str, List[ForecastBlock]] = {ind: [] for ind in networks.indicators}
    for k in range(blocks):
        block_origin = origin + timedelta(days=k * L)
        end = panel.date_range.offset(block_origin) + 1
        if end < W:
            raise DataError(f"기준일 {block_origin}까지의 관측이 입력 윈도우 {W}일보다 짧습니다.")
        window = _normalized_window(networks, raw[end - W:end])
        for ind in networks.indicators:
            out[ind].append(predict_block(networks.nets[ind], window, networks.scalers.get(ind), ind,
                                          block_origin + timedelta(days=1)))
    return ForecastRun(panel.region_id, origin, out, _run_metadata(networks, panel, origin, blocks, "rolling_origin"))
