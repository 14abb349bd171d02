"""
입력 데이터 수집과 실행 설정 로드
CSV(패널/접종/변이)를 dataset_schemas 기준으로 검증하고, 실행 설정(.ini)을 RunConfig로 읽는다
"""
from __future__ import annotations

import configparser
import csv
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.training import TrainConfig
from utils.config import get_default, output_dir
from utils.dataset_groups import count_columns, item_of_column, load_dataset_groups, load_schema
from utils.errors import ArgumentError, ConfigError, DataError, SchemaError
from utils.forecast_pipeline import AdaptationConfig
from utils.metrics import PhaseSpec
from utils.run_metadata import config_digest, file_digest
from utils.timeseries import DEFAULT_FILL_LIMIT, DailySeries, DateRange, RegionPanel, align_panel
from utils.vaccination import (
    EFFECTIVENESS_COLUMN,
    DoseAdministrations,
    EffectivenessSeries,
    VaccinationParams,
    doses_from_cumulative,
    infer_second_doses,
    population_effectiveness,
)
from utils.variant import DEFAULT_ALPHA, DEFAULT_BETA, VARIANT_COLUMN, InfectivitySeries, VariantTable, infectivity_index

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ============================================
# CSV 읽기
# ============================================
def _read_raw(path: PathLike, encoding: str) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(str(path), "파일이 없습니다.")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding=encoding, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(str(path), "파일이 비어 있습니다.", line=1) from exc
    except (pd.errors.ParserError, UnicodeDecodeError, csv.Error, ValueError) as exc:
        raise SchemaError(str(path), f"CSV를 해석할 수 없습니다: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if frame.empty:
        raise SchemaError(str(path), "데이터 행이 없습니다.", line=2)
    if len(set(frame.columns)) != len(frame.columns):
        raise SchemaError(str(path), f"중복된 헤더가 있습니다: {list(frame.columns)}", line=1)
    return frame


def _lines(frame: pd.DataFrame) -> List[int]:
    """행의 원본 파일 줄 번호 (헤더가 1행)"""
    return [int(i) + 2 for i in frame.index]


def _parse_dates(frame: pd.DataFrame, path: PathLike, column: str, fmt: str) -> List[date]:
    if column not in frame.columns:
        raise SchemaError(str(path), f"날짜 컬럼 '{column}'이 없습니다.", line=1, column=column)
    days: List[date] = []
    lines = _lines(frame)
    for line, text in zip(lines, frame[column].tolist()):
        try:
            days.append(datetime.strptime(str(text).strip(), fmt).date())
        except ValueError:
            raise SchemaError(str(path), f"날짜 형식이 아닙니다: '{text}'", line=line, column=column) from None
    seen = set()
    for line, day in zip(lines, days):
        if day in seen:
            raise SchemaError(str(path), f"날짜가 중복되었습니다: {day}", line=line, column=column)
        seen.add(day)
    return days


def _parse_numbers(frame: pd.DataFrame, path: PathLike, column: str, allow_missing: bool) -> np.ndarray:
    values = np.full(len(frame), np.nan)
    lines = _lines(frame)
    for row, text in enumerate(frame[column].tolist()):
        text = str(text).strip()
        if text == "" or text.lower() in ("na", "nan"):
            if not allow_missing:
                raise SchemaError(str(path), "값이 비어 있습니다.", line=lines[row], column=column)
            continue
        try:
            value = float(text)
        except ValueError:
            raise SchemaError(str(path), f"숫자가 아닙니다: '{text}'", line=lines[row], column=column) from None
        if not np.isfinite(value):
            raise SchemaError(str(path), f"유한한 값이 아닙니다: '{text}'", line=lines[row], column=column)
        values[row] = value
    return values


def _check_rows(values: np.ndarray, path: PathLike, column: str, ok: np.ndarray, message: str) -> None:
    bad = np.flatnonzero(~ok & ~np.isnan(values))
    if bad.size:
        row = int(bad[0])
        raise SchemaError(str(path), f"{message}: {values[row]}", line=row + 2, column=column)


def read_panel_csv(path: PathLike) -> pd.DataFrame:
    """
    패널 CSV (date + 값 컬럼) → DatetimeIndex DataFrame, 빈 칸은 NaN

    Raises:
        SchemaError: 날짜/숫자 형식, 라벨 허용 값, 건수 음수 위반 (파일, 행, 컬럼 포함)
    """
    schema = load_schema("panel")
    frame = _read_raw(path, schema.get("encoding", "utf-8"))
    date_column = schema["date_column"]
    days = _parse_dates(frame, path, date_column, schema["date_format"])
    value_columns = [c for c in frame.columns if c != date_column]
    if len(value_columns) < int(schema.get("min_value_columns", 1)):
        raise SchemaError(str(path), "값 컬럼이 없습니다.", line=1)
    counts = set(count_columns())
    data: Dict[str, np.ndarray] = {}
    for column in value_columns:
        values = _parse_numbers(frame, path, column, allow_missing=True)
        item = item_of_column(column)
        if item is not None and item.allowed is not None:
            _check_rows(values, path, column, np.isin(values, item.allowed), "허용되지 않는 라벨 값")
        if column in counts:
            _check_rows(values, path, column, values >= 0, "건수가 음수입니다")
        data[column] = values
    result = pd.DataFrame(data, index=pd.DatetimeIndex(pd.to_datetime(days)))
    logger.info(f"패널 CSV 로드: {path} ({len(result)}행, 컬럼 {len(value_columns)}개)")
    return result.sort_index()


def read_doses_csv(path: PathLike, cumulative: bool = False) -> DoseAdministrations:
    """
    접종 CSV (date, dose1, dose2, ...) → DoseAdministrations

    빠진 날짜는 접종 0으로 채운다 (누적 형식이면 직전 값 유지).

    Raises:
        SchemaError: 형식 위반
        ConsistencyError: 누적 t+1차 > 누적 t차 또는 누적 감소
    """
    schema = load_schema("doses")
    frame = _read_raw(path, schema.get("encoding", "utf-8"))
    date_column = schema["date_column"]
    days = _parse_dates(frame, path, date_column, schema["date_format"])
    pattern = re.compile(schema["column_pattern"])
    for column in frame.columns:
        if column != date_column and not pattern.match(column):
            raise SchemaError(str(path), "알 수 없는 컬럼입니다 (dose<n> 형식만 허용)", line=1, column=column)
    for required in schema.get("required_columns", []):
        if required not in frame.columns:
            raise SchemaError(str(path), f"필수 컬럼 '{required}'이 없습니다.", line=1, column=required)
    columns = sorted((c for c in frame.columns if c != date_column), key=lambda c: int(c[4:]))
    expected = [f"dose{t}" for t in range(1, len(columns) + 1)]
    if columns != expected:
        raise SchemaError(str(path), f"접종 차수 컬럼이 연속적이지 않습니다: {columns}", line=1)
    data = {}
    for column in columns:
        values = _parse_numbers(frame, path, column, allow_missing=False)
        if schema.get("nonnegative", True):
            _check_rows(values, path, column, values >= 0, "접종 수가 음수입니다")
        data[column] = values
    result = pd.DataFrame(data, index=pd.DatetimeIndex(pd.to_datetime(days))).sort_index()
    full_index = pd.date_range(result.index[0], result.index[-1], freq="D")
    if cumulative:
        result = result.reindex(full_index).ffill()
        doses = doses_from_cumulative(result)
    else:
        doses = DoseAdministrations.from_frame(result.reindex(full_index, fill_value=0.0))
    logger.info(f"접종 CSV 로드: {path} ({doses.T}차, {doses.date_range})")
    return doses


def read_variants_csv(
    path: PathLike,
    weights: Union[Mapping[str, float], Sequence[float]],
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> VariantTable:
    """
    변이 CSV (week_start + 변이별 점유율) → VariantTable

    Raises:
        SchemaError: 형식 위반 또는 점유율이 [0, 1] 밖
    """
    schema = load_schema("variants")
    frame = _read_raw(path, schema.get("encoding", "utf-8"))
    date_column = schema["date_column"]
    weeks = _parse_dates(frame, path, date_column, schema["date_format"])
    variants = [c for c in frame.columns if c != date_column]
    if len(variants) < int(schema.get("min_value_columns", 1)):
        raise SchemaError(str(path), "변이 컬럼이 없습니다.", line=1)
    lo, hi = schema.get("value_range", [0.0, 1.0])
    shares = {}
    for column in variants:
        values = _parse_numbers(frame, path, column, allow_missing=False)
        _check_rows(values, path, column, (values >= lo) & (values <= hi), "점유율이 범위를 벗어났습니다")
        shares[column] = values
    table_frame = pd.DataFrame({date_column: [w.isoformat() for w in weeks], **shares})
    try:
        table = VariantTable.from_frame(table_frame.rename(columns={date_column: "week_start"}), weights, alpha, beta)
    except ArgumentError as exc:
        raise ConfigError(f"변이 가중치/스케일 설정 오류 ({path}): {exc}") from None
    logger.info(f"변이 CSV 로드: {path} (변이 {table.N}개, 관측 {len(weeks)}주)")
    return table


def read_indicator_series(path: PathLike, indicator: str) -> DailySeries:
    """
    패널 형식(date + 지표 컬럼) 또는 예측 형식(date, indicator, value) CSV에서 지표 시계열 하나

    빈 값의 날은 건너뛰고, 남은 날짜는 연속이어야 한다.

    Raises:
        SchemaError: 형식 위반, 지표 컬럼/행 없음, 날짜가 연속적이지 않음
    """
    schema = load_schema("panel")
    frame = _read_raw(path, schema.get("encoding", "utf-8"))
    date_column = schema["date_column"]
    if "indicator" in frame.columns and "value" in frame.columns:
        frame = frame[frame["indicator"].str.strip() == indicator]
        column = "value"
    else:
        column = indicator
    if column not in frame.columns:
        raise SchemaError(str(path), f"'{indicator}' 컬럼이 없습니다.", line=1, column=column)
    if frame.empty:
        raise SchemaError(str(path), f"'{indicator}' 행이 없습니다.", column="indicator")
    days = _parse_dates(frame, path, date_column, schema["date_format"])
    values = _parse_numbers(frame, path, column, allow_missing=True)
    series = pd.Series(values, index=pd.DatetimeIndex(pd.to_datetime(days)), name=indicator).sort_index().dropna()
    if series.empty:
        raise SchemaError(str(path), f"'{indicator}' 값이 모두 비어 있습니다.", column=column)
    expected = pd.date_range(series.index[0], series.index[-1], freq="D")
    if len(series) != len(expected):
        missing = expected.difference(series.index)[0].date()
        raise SchemaError(str(path), f"'{indicator}' 날짜가 연속적이지 않습니다: {missing} 없음", column=column)
    return DailySeries.from_pandas(series, indicator)


# ============================================
# 실행 설정
# ============================================
@dataclass(frozen=True)
class RegionSource:
    """지역 하나의 입력 파일과 기본 정보"""
    region_id: str
    population: int
    panel_paths: Tuple[Path, ...]
    doses_path: Optional[Path] = None
    variants_path: Optional[Path] = None
    date_range: Optional[DateRange] = None
    doses_cumulative: bool = False
    infer_second_doses: bool = False
    fill_limit: int = DEFAULT_FILL_LIMIT

    def files(self) -> List[Path]:
        return [p for p in (*self.panel_paths, self.doses_path, self.variants_path) if p is not None]


@dataclass(frozen=True)
class SurrogateConfig:
    """격자 탐색용 SEIR 대리 실행기 파라미터"""
    beta0: float = 0.3
    sigma: float = 1 / 5.2
    gamma: float = 1 / 7.0
    initial_exposed: float = 100.0
    initial_infectious: float = 50.0


@dataclass(frozen=True, eq=False)
class RunConfig:
    """실험 하나의 실행 설정"""
    path: Path
    seed: int
    region: RegionSource
    vaccination: VaccinationParams
    variant_weights: Dict[str, float]
    variant_alpha: float
    variant_beta: float
    train: TrainConfig
    adaptation: AdaptationConfig
    feature_groups: Tuple[int, ...]
    optimized_inputs: Tuple[str, ...]
    output_dir: Path
    external: Optional[RegionSource] = None
    phases: Optional[PhaseSpec] = None
    train_range: Optional[DateRange] = None
    test_range: Optional[DateRange] = None
    blocks: int = 2
    include_infections: bool = True
    error_smoothing_window: int = 1
    s_grid: Tuple[float, ...] = ()
    a3_grid: Tuple[float, ...] = ()
    surrogate: SurrogateConfig = SurrogateConfig()
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def digest(self) -> str:
        """설정 내용과 참조 파일 내용의 SHA-256"""
        files = {str(p): file_digest(p) for source in (self.region, self.external) if source for p in source.files()}
        return config_digest({"config": self.raw, "files": files})


def _section(parser: configparser.ConfigParser, name: str) -> Dict[str, str]:
    return dict(parser[name]) if parser.has_section(name) else {}


def _get(section: Mapping[str, str], key: str, cast, default, name: str):
    if key not in section or section[key].strip() == "":
        return default
    try:
        return cast(section[key].strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {key} 값이 올바르지 않습니다: '{section[key]}' ({exc})") from None


def _bool(text: str) -> bool:
    value = text.lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"불리언이 아닙니다: {text}")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _strings(text: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _date_range(section: Mapping[str, str], start_key: str, end_key: str, name: str) -> Optional[DateRange]:
    start = _get(section, start_key, date.fromisoformat, None, name)
    end = _get(section, end_key, date.fromisoformat, None, name)
    if start is None and end is None:
        return None
    if start is None or end is None:
        raise ConfigError(f"[{name}] {start_key}와 {end_key}는 함께 지정해야 합니다.")
    try:
        return DateRange(start, end)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def _resolve(base: Path, text: Optional[str]) -> Optional[Path]:
    if not text:
        return None
    path = Path(text)
    return path if path.is_absolute() else (base / path)


def _region_source(section: Mapping[str, str], name: str, base: Path) -> RegionSource:
    region_id = section.get("id", "").strip()
    if not region_id:
        raise ConfigError(f"[{name}] id가 없습니다.")
    population = _get(section, "population", int, None, name)
    if population is None or population < 1:
        raise ConfigError(f"[{name}] population은 양의 정수여야 합니다.")
    panels = tuple(_resolve(base, p) for p in _strings(section.get("panel", "")))
    if not panels:
        raise ConfigError(f"[{name}] panel 파일이 없습니다.")
    source = RegionSource(
        region_id=region_id,
        population=population,
        panel_paths=panels,
        doses_path=_resolve(base, section.get("doses", "").strip()),
        variants_path=_resolve(base, section.get("variants", "").strip()),
        date_range=_date_range(section, "start", "end", name),
        doses_cumulative=_get(section, "doses_cumulative", _bool, False, name),
        infer_second_doses=_get(section, "infer_second_doses", _bool, False, name),
        fill_limit=_get(section, "fill_limit", int, DEFAULT_FILL_LIMIT, name),
    )
    missing = [str(p) for p in source.files() if not p.is_file()]
    if missing:
        raise ConfigError(f"[{name}] 참조 파일이 없습니다: {missing}")
    return source


def load_run_config(path: PathLike) -> RunConfig:
    """
    [section] + key = value 형식의 실행 설정 로드

    없는 값은 config.json 기본값을 쓴다. 상대 경로는 설정 파일 위치 기준이다.

    Raises:
        ConfigError: 파일이 없거나, seed가 없거나, 값/참조 파일이 잘못되었을 때
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"실행 설정 파일이 없습니다: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"실행 설정을 해석할 수 없습니다: {path}: {exc}") from None
    base = path.parent
    run = _section(parser, "run")
    seed = _get(run, "seed", int, None, "run")
    if seed is None:
        raise ConfigError("[run] seed가 없습니다. 모든 실행은 명시적인 seed가 필요합니다.")
    if not parser.has_section("region"):
        raise ConfigError("[region] 섹션이 없습니다.")
    region = _region_source(_section(parser, "region"), "region", base)
    external = _region_source(_section(parser, "external"), "external", base) if parser.has_section("external") else None

    vacc = _section(parser, "vaccination")
    base_params = VaccinationParams()
    try:
        vaccination = VaccinationParams(
            a=_get(vacc, "a", _floats, base_params.a, "vaccination"),
            s=_get(vacc, "s", float, base_params.s, "vaccination"),
            K=_get(vacc, "K", int, base_params.K, "vaccination"),
            P=region.population,
            slope_period_days=_get(vacc, "slope_period_days", int, base_params.slope_period_days, "vaccination"),
        )
    except ValueError as exc:
        raise ConfigError(f"[vaccination] {exc}") from None

    variant = _section(parser, "variant")
    weights: Dict[str, float] = {}
    for name, text in _section(parser, "variant.weights").items():
        try:
            weights[name] = float(text)
        except ValueError:
            raise ConfigError(f"[variant.weights] {name} 값이 숫자가 아닙니다: '{text}'") from None

    train_section = _section(parser, "train")
    overrides: Dict[str, Any] = {"seed": seed}
    for key, cast in (("learning_rate", float), ("epochs", int), ("batch_size", int), ("optimizer", str),
                      ("hidden_size", int), ("depth", int), ("clip_norm", float), ("ensemble", int),
                      ("window_length", int)):
        value = _get(train_section, key, cast, None, "train")
        if value is not None:
            overrides[key] = value
    try:
        train = TrainConfig().with_overrides(**overrides)
    except ValueError as exc:
        raise ConfigError(f"[train] {exc}") from None

    adapt_section = _section(parser, "adaptation")
    adapt_kwargs: Dict[str, Any] = {"seed": seed}
    for key, cast in (("hidden_size", int), ("learning_rate", float), ("epochs", int), ("stride", int),
                      ("validation_fraction", float), ("adapt_in_loop", _bool), ("indicators", _strings)):
        value = _get(adapt_section, key, cast, None, "adaptation")
        if value is not None:
            adapt_kwargs[key] = value
    try:
        adaptation = AdaptationConfig(**adapt_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[adaptation] {exc}") from None

    phases = None
    if parser.has_section("phases"):
        try:
            phases = PhaseSpec.from_mapping(_section(parser, "phases"))
        except ValueError as exc:
            raise ConfigError(f"[phases] {exc}") from None

    features = _section(parser, "features")
    groups = _get(features, "groups", _ints, tuple(get_default("feature_groups", default=range(1, 8))), "features")
    unknown = [g for g in groups if g not in load_dataset_groups()]
    if unknown:
        raise ConfigError(f"[features] 알 수 없는 그룹 id: {unknown}")
    calibration = _section(parser, "calibration")
    surrogate = _section(parser, "surrogate")
    defaults = SurrogateConfig()

    config = RunConfig(
        path=path,
        seed=seed,
        region=region,
        vaccination=vaccination,
        variant_weights=weights,
        variant_alpha=_get(variant, "alpha", float, DEFAULT_ALPHA, "variant"),
        variant_beta=_get(variant, "beta", float, DEFAULT_BETA, "variant"),
        train=train,
        adaptation=adaptation,
        feature_groups=tuple(groups),
        optimized_inputs=_get(features, "optimized", _strings,
                              tuple(get_default("optimized_inputs", default=())), "features"),
        output_dir=output_dir(_resolve(base, _section(parser, "output").get("dir", "").strip())),
        external=external,
        phases=phases,
        train_range=_date_range(run, "train_start", "train_end", "run"),
        test_range=_date_range(run, "test_start", "test_end", "run"),
        blocks=_get(run, "blocks", int, 2, "run"),
        include_infections=_get(vacc, "include_infections", _bool, True, "vaccination"),
        error_smoothing_window=_get(run, "error_smoothing_window", int,
                                    int(get_default("calibration", "error_smoothing_window", default=1)), "run"),
        s_grid=_get(calibration, "s_grid", _floats, tuple(get_default("calibration", "s_grid", default=())),
                    "calibration"),
        a3_grid=_get(calibration, "a3_grid", _floats, tuple(get_default("calibration", "a3_grid", default=())),
                     "calibration"),
        surrogate=SurrogateConfig(
            beta0=_get(surrogate, "beta0", float, defaults.beta0, "surrogate"),
            sigma=_get(surrogate, "sigma", float, defaults.sigma, "surrogate"),
            gamma=_get(surrogate, "gamma", float, defaults.gamma, "surrogate"),
            initial_exposed=_get(surrogate, "initial_exposed", float, defaults.initial_exposed, "surrogate"),
            initial_infectious=_get(surrogate, "initial_infectious", float, defaults.initial_infectious, "surrogate"),
        ),
        raw={name: dict(parser[name]) for name in parser.sections()},
    )
    if config.blocks < 1:
        raise ConfigError(f"[run] blocks는 1 이상이어야 합니다: {config.blocks}")
    logger.info(f"실행 설정 로드: {path} (region={region.region_id}, seed={seed})")
    return config


# ============================================
# 지역 로드
# ============================================
@dataclass(frozen=True, eq=False)
class LoadedRegion:
    """정렬된 패널과 원본 접종/변이 데이터, 파생 컬럼(E, f̃)"""
    panel: RegionPanel
    doses: Optional[DoseAdministrations]
    variants: Optional[VariantTable]
    params: VaccinationParams
    effectiveness: Optional[EffectivenessSeries] = None
    infectivity: Optional[InfectivitySeries] = None
    include_infections: bool = True

    def groups_present(self) -> Tuple[int, ...]:
        columns = set(self.panel.column_names)
        return tuple(g.id for g in load_dataset_groups().values() if columns & set(g.columns))

    def projections(self, days: int) -> Dict[str, DailySeries]:
        """
        패널 다음날부터 days일 동안의 E(d), f̃(d) 추정

        E는 이후 접종이 없다고 보고 감쇠만 반영하고, f̃는 마지막 변이 관측을 상수 외삽한다.
        """
        start = self.panel.date_range.end + timedelta(days=1)
        horizon = DateRange.from_length(start, days)
        out: Dict[str, DailySeries] = {}
        if self.doses is not None and EFFECTIVENESS_COLUMN in self.panel:
            dpc = self.panel.column("dpc") if self.include_infections and "dpc" in self.panel else None
            out[EFFECTIVENESS_COLUMN] = population_effectiveness(self.doses, self.params, horizon, dpc).series
        if self.variants is not None and VARIANT_COLUMN in self.panel:
            out[VARIANT_COLUMN] = infectivity_index(self.variants, horizon).normalized
        return out


def _pad_doses(doses: DoseAdministrations, T: int) -> DoseAdministrations:
    series = list(doses.doses)
    start = doses.date_range.start
    n = len(doses.date_range)
    for t in range(len(series) + 1, T + 1):
        series.append(DailySeries(f"dose{t}", start, np.zeros(n)))
    return DoseAdministrations(tuple(series[:T]))


def load_region(
    config: RunConfig,
    source: Optional[RegionSource] = None,
    groups: Optional[Sequence[int]] = None,
    params: Optional[VaccinationParams] = None,
) -> LoadedRegion:
    """
    패널 CSV 정렬 후 E(d), f̃(d) 파생 컬럼을 계산해 추가

    그룹 7이 선택되면 접종 파일이, 그룹 5가 선택되면 변이 파일이 필요하다.
    선택되지 않은 그룹의 파일이 없으면 해당 파생 컬럼 없이 진행한다.

    Raises:
        SchemaError: CSV 스키마 위반
        AlignmentError: fill_limit를 넘는 결측
        ConsistencyError: 접종 누적 불일치
        ConfigError: 선택된 그룹에 필요한 파일이 없을 때
    """
    source = source or config.region
    groups = tuple(groups if groups is not None else config.feature_groups)
    params = (params or config.vaccination).with_population(source.population)

    frames = [read_panel_csv(p) for p in source.panel_paths]
    series = [
        frame[column].dropna().rename(column)
        for frame in frames
        for column in frame.columns
        if frame[column].notna().any()
    ]
    if not series:
        raise DataError(f"지역 '{source.region_id}'의 패널에 값이 없습니다.")
    if source.date_range is not None:
        target = source.date_range
    else:
        target = DateRange(max(s.index[0] for s in series).date(), min(s.index[-1] for s in series).date())
    panel = align_panel(series, target, source.fill_limit, source.region_id, source.population)

    doses = None
    effectiveness = None
    if source.doses_path is not None:
        doses = read_doses_csv(source.doses_path, source.doses_cumulative)
        if source.infer_second_doses and doses.T == 1:
            doses = DoseAdministrations((doses.doses[0], infer_second_doses(doses.doses[0])))
        if doses.T != params.T:
            if doses.T > params.T:
                raise ConfigError(f"접종 파일 차수({doses.T})가 백신 파라미터 T({params.T})보다 많습니다.")
            doses = _pad_doses(doses, params.T)
        dpc = panel.column("dpc") if config.include_infections and "dpc" in panel else None
        effectiveness = population_effectiveness(doses, params, panel.date_range, dpc)
        panel = panel.with_columns([effectiveness.series])
    elif 7 in groups:
        raise ConfigError(f"그룹 7(백신 효과)이 선택되었지만 지역 '{source.region_id}'의 접종 파일이 없습니다.")

    variants = None
    infectivity = None
    if source.variants_path is not None:
        variants = read_variants_csv(source.variants_path, config.variant_weights,
                                     config.variant_alpha, config.variant_beta)
        infectivity = infectivity_index(variants, panel.date_range)
        panel = panel.with_columns([infectivity.normalized])
    elif 5 in groups:
        raise ConfigError(f"그룹 5(변이 감염력)가 선택되었지만 지역 '{source.region_id}'의 변이 파일이 없습니다.")

    logger.info(f"지역 로드 완료: {source.region_id} {panel.date_range}, 컬럼 {len(panel.column_names)}개")
    return LoadedRegion(panel, doses, variants, params, effectiveness, infectivity, config.include_infections)
