"""
예측 파이프라인 명령행 도구

하위 명령:
    synth      합성 지역 데이터(CSV)와 실행 설정 생성
    calibrate  (s, a3) 격자 탐색 → 보정 파라미터 파일
    train      지표별 네트워크 학습 → 체크포인트 (외부 지역이 있으면 적응 모델도)
    forecast   재귀 예측 (--adapt 시 적응 모델 보정)
    evaluate   관측/예측 CSV 상대 오차 (단계별 선택)
    ablate     데이터셋 그룹 제외 실험 오차 행렬

종료 코드: 0 성공, 1 사용법 오류, 2 데이터/설정 오류, 3 실행 실패
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# 프로젝트 루트를 sys.path에 추가
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import pandas as pd

from models.lstm_network import BLOCK_LENGTH
from utils.calibration import (
    REFERENCE_VALUES,
    LstmReplicationRunner,
    SeirReplicationRunner,
    ablation_study,
    evaluate_series,
    grid_search_vaccination,
)
from utils.config import get_default, output_dir
from utils.dataset_groups import INDICATORS
from utils.errors import ArgumentError, ConfigError, DataError, UsageError
from utils.forecast_pipeline import (
    AdaptationModel,
    ExogenousFutures,
    FeatureConfig,
    IndicatorNetworks,
    blind_features,
    recurrent_rollout,
    train_adaptation,
    train_indicator_networks,
)
from utils.ingest import RunConfig, load_region, load_run_config, read_indicator_series
from utils.metrics import PhaseSpec
from utils.run_metadata import write_sidecar
from utils.synth import SynthConfig, export_csv, generate, rollout_schedule, takeover_scenario
from utils.timeseries import DailySeries, DateRange
from utils.vaccination import EFFECTIVENESS_COLUMN, effectiveness_around, population_effectiveness
from utils.variant import VARIANT_COLUMN

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_FAILURE = 3

ADAPTATION_FILE = "adaptation.npz"


class _Parser(argparse.ArgumentParser):
    """argparse 오류를 종료 대신 UsageError로 전달"""

    def error(self, message):
        raise UsageError(f"{self.format_usage().strip()}\n{self.prog}: {message}")


# ============================================
# 공통
# ============================================
def _load(args) -> RunConfig:
    config = load_run_config(args.config)
    seed = getattr(args, "seed", None)
    if seed is not None and seed != config.seed:
        logger.info(f"seed 재지정: {config.seed} → {seed}")
        config = replace(
            config,
            seed=seed,
            train=config.train.with_overrides(seed=seed),
            adaptation=replace(config.adaptation, seed=seed),
        )
    return config


def _out_dir(args, config: Optional[RunConfig], name: str) -> Path:
    if getattr(args, "out", None):
        directory = Path(args.out)
    else:
        directory = (config.output_dir if config else Path(".")) / name
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _metadata(config: RunConfig, command: str, **extra) -> Dict[str, object]:
    return {
        "command": command,
        "config": str(config.path),
        "config_digest": config.digest(),
        "seed": config.seed,
        "region_id": config.region.region_id,
        **extra,
    }


def _default_origin(config: RunConfig, panel_range: DateRange) -> date:
    if config.test_range is not None:
        return config.test_range.start - timedelta(days=1)
    if config.train_range is not None:
        return config.train_range.end
    return panel_range.end


def _parse_origin(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise UsageError(f"--origin 형식은 YYYY-MM-DD 입니다: {text}") from None


def _phases_from_args(items: Sequence[str]) -> Optional[PhaseSpec]:
    if not items:
        return None
    mapping = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--phase 형식은 NAME=YYYY-MM-DD..YYYY-MM-DD 입니다: {item}")
        mapping[name.strip()] = value.strip()
    return PhaseSpec.from_mapping(mapping)


# ============================================
# synth
# ============================================
def _write_run_ini(path: Path, config: SynthConfig, seed: int, external: bool) -> None:
    start = config.start_date
    days = config.days
    test_days = 2 * BLOCK_LENGTH
    train_end = start + timedelta(days=days - test_days - 1)
    test_start = train_end + timedelta(days=1)
    test_end = start + timedelta(days=days - 1)
    lines = [
        "# 합성 데이터용 실행 설정 (자동 생성)",
        "[run]",
        f"seed = {seed}",
        f"train_start = {start.isoformat()}",
        f"train_end = {train_end.isoformat()}",
        f"test_start = {test_start.isoformat()}",
        f"test_end = {test_end.isoformat()}",
        "blocks = 2",
        "",
        "[region]",
        f"id = synth-{seed}",
        f"population = {config.population}",
        "panel = panel.csv",
        "doses = doses.csv",
        "variants = variants.csv",
        "",
        "# 합성 정답 E(d)에는 감염 면역이 없다",
        "[vaccination]",
        "include_infections = false",
        "",
    ]
    if external:
        lines += [
            "[external]",
            f"id = synth-{seed}-external",
            f"population = {config.population}",
            "panel = external/panel.csv",
            "doses = external/doses.csv",
            "variants = external/variants.csv",
            "",
        ]
    table = config.variants
    lines += [
        "[variant]",
        f"alpha = {table.alpha!r}",
        f"beta = {table.beta!r}",
        "",
        "[variant.weights]",
        *(f"{name} = {weight!r}" for name, weight in zip(table.variants, table.weights)),
        "",
        "[phases]",
        f"spread = {test_start.isoformat()}..{(test_start + timedelta(days=9)).isoformat()}",
        f"peak = {(test_start + timedelta(days=10)).isoformat()}..{(test_start + timedelta(days=17)).isoformat()}",
        f"decay = {(test_start + timedelta(days=18)).isoformat()}..{test_end.isoformat()}",
        "",
        "[output]",
        "dir = output",
        "",
    ]
    path.write_text("\n".join(lines), encoding="utf-8")


def cmd_synth(args) -> int:
    out = Path(args.out)
    config = takeover_scenario(start_date=args.start, days=args.days, population=args.population, seed=args.seed)
    output = generate(config)
    paths = export_csv(output, out)
    if args.external:
        ext_config = config.with_changes(
            seed=args.seed + 1,
            doses=rollout_schedule(config.start_date, args.days, args.population,
                                   start_offset=30, daily_rate=0.02, coverage=0.9),
        )
        for name, path in export_csv(generate(ext_config), out / "external").items():
            paths[f"external_{name}"] = path
    run_ini = out / "run.ini"
    _write_run_ini(run_ini, config, args.seed, args.external)
    paths["run"] = run_ini
    metadata = {"command": "synth", "seed": args.seed, "days": args.days, "population": args.population,
                "start_date": config.start_date}
    for path in paths.values():
        write_sidecar(path, metadata)
    print(f"합성 데이터 생성: {out} ({len(paths)}개 파일)")
    return EXIT_OK


# ============================================
# calibrate
# ============================================
def cmd_calibrate(args) -> int:
    config = _load(args)
    region = load_region(config, groups=())
    if region.doses is None:
        raise ConfigError("격자 탐색에는 [region] doses 파일이 필요합니다.")
    panel = region.panel
    observed = panel.column("dpc")
    test_range = config.test_range or panel.date_range
    if args.runner == "seir":
        surrogate = config.surrogate
        runner = SeirReplicationRunner(SynthConfig(
            start_date=panel.date_range.start,
            days=len(panel),
            population=panel.population,
            beta0=surrogate.beta0,
            sigma=surrogate.sigma,
            gamma=surrogate.gamma,
            initial_exposed=surrogate.initial_exposed,
            initial_infectious=surrogate.initial_infectious,
            variants=region.variants,
            seed=config.seed,
        ))
    else:
        if config.train_range is None or config.test_range is None:
            raise ConfigError("lstm 실행기에는 [run] train_start/end, test_start/end가 필요합니다.")
        base = panel.drop_columns([EFFECTIVENESS_COLUMN]) if EFFECTIVENESS_COLUMN in panel else panel
        features = FeatureConfig.from_groups(base.column_names, config.feature_groups,
                                             window_length=config.train.window_length)
        runner = LstmReplicationRunner(base, features, config.train, config.train_range, config.test_range,
                                       config.include_infections)
    result = grid_search_vaccination(
        region.doses, observed, runner,
        s_grid=config.s_grid, a3_grid=config.a3_grid,
        base_params=region.params, test_range=test_range,
        smoothing_window=config.error_smoothing_window, workers=args.workers,
    )

    out = _out_dir(args, config, "calibration")
    metadata = _metadata(config, "calibrate", runner=args.runner, test_range=str(test_range),
                         s_grid=list(config.s_grid), a3_grid=list(config.a3_grid))
    grid_path = out / "grid.csv"
    result.to_frame().to_csv(grid_path, index=False)
    write_sidecar(grid_path, metadata)

    best = result.best_params(region.params)
    dpc = panel.column("dpc") if config.include_infections else None
    effectiveness = population_effectiveness(region.doses, best, panel.date_range, dpc).series
    params_data = {**best.to_dict(), "error": result.best.error}
    earliest = test_range.start - timedelta(days=10)
    if earliest in effectiveness.date_range:
        around = effectiveness_around(effectiveness, test_range.start)
        params_data["effectiveness_around"] = {
            "day": test_range.start.isoformat(),
            "by_lag": {str(k): v for k, v in around.by_lag.items()},
            "min": around.minimum,
            "max": around.maximum,
        }
        print(f"시험 구간 시작 전 7~10일 인구 효과: {around.minimum:.3f} ~ {around.maximum:.3f}")
    params_path = out / "calibrated_params.json"
    params_path.write_text(json.dumps(params_data, indent=2, ensure_ascii=False), encoding="utf-8")
    write_sidecar(params_path, {**metadata, "calibrated_s": best.s, "calibrated_a3": best.a[2]})

    print(result.error_matrix().to_string())
    print(f"최적: s={result.best.s}, a3={result.best.a3}, 오차={result.best.error:.4f}")
    reference = REFERENCE_VALUES.get("tel_aviv_residual_error")
    if reference is not None:
        print(f"(참고값, 검증 기준 아님: 보고된 잔차 오차 {reference})")
    if result.failed:
        print(f"실패한 격자 셀 {len(result.failed)}개", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ============================================
# train
# ============================================
def cmd_train(args) -> int:
    config = _load(args)
    region = load_region(config)
    panel = region.panel
    features = FeatureConfig.from_groups(panel.column_names, config.feature_groups,
                                         window_length=config.train.window_length)
    if args.blind:
        features = blind_features(features)
    indicators = [ind for ind in INDICATORS if ind in panel]
    networks = train_indicator_networks(panel, features, config.train, config.train_range, indicators,
                                        workers=args.workers)
    out = _out_dir(args, config, "checkpoints")
    metadata = _metadata(config, "train", train_range=str(config.train_range or panel.date_range),
                         feature_columns=list(features.columns), train_config=config.train.to_dict())
    paths: List[Path] = networks.save(out)

    if config.external is not None:
        external = load_region(config, source=config.external)
        ext_features = blind_features(FeatureConfig.from_groups(
            external.panel.column_names, config.feature_groups, window_length=config.train.window_length))
        ext_indicators = [ind for ind in config.adaptation.indicators if ind in external.panel]
        blind = train_indicator_networks(external.panel, ext_features, config.train, None, ext_indicators,
                                         workers=args.workers)
        model = train_adaptation(external.panel, blind, config.adaptation)
        paths.append(model.save(out / ADAPTATION_FILE))
        metadata["adaptation_validation"] = model.validation

    for path in paths:
        write_sidecar(path, metadata)
    for ind, reports in networks.reports.items():
        for m, report in enumerate(reports):
            print(f"{ind}[{m}]: 손실 {report.initial_loss:.5f} → {report.final_loss:.5f} (best epoch {report.best_epoch})")
    print(f"체크포인트 {len(paths)}개 저장: {out}")
    return EXIT_OK


# ============================================
# forecast
# ============================================
def _future_channels(region, horizon: DateRange) -> Dict[str, DailySeries]:
    """예측 구간의 E, f̃ (패널이 덮으면 패널 값, 아니면 투영값)"""
    panel = region.panel
    beyond = (horizon.end - panel.date_range.end).days
    projected = region.projections(beyond) if beyond > 0 else {}
    channels = {}
    for column in (EFFECTIVENESS_COLUMN, VARIANT_COLUMN):
        if column not in panel:
            continue
        series = panel.column(column)
        if column in projected:
            extension = projected[column]
            series = DailySeries(column, series.start_date, list(series.values) + list(extension.values))
        if series.date_range.covers(horizon):
            channels[column] = series.slice(horizon)
    return channels


def cmd_forecast(args) -> int:
    config = _load(args)
    blocks = config.blocks if args.blocks is None else args.blocks
    if blocks < 1:
        raise UsageError(f"--blocks는 1 이상이어야 합니다: {blocks}")
    origin = _parse_origin(args.origin) if args.origin else None
    checkpoints = Path(args.checkpoints) if args.checkpoints else config.output_dir / "checkpoints"
    networks = IndicatorNetworks.load(checkpoints)
    region = load_region(config)
    panel = region.panel
    if origin is None:
        origin = _default_origin(config, panel.date_range)
    horizon = DateRange.from_length(origin + timedelta(days=1), blocks * networks.features.block_length)
    channels = _future_channels(region, horizon)
    exogenous = ExogenousFutures.defaults(networks.features, networks.indicators, projected=channels)

    adaptation = None
    adaptation_inputs = None
    if args.adapt:
        path = checkpoints / ADAPTATION_FILE
        if not path.is_file():
            raise ConfigError(f"적응 모델 체크포인트가 없습니다: {path} (외부 지역을 설정하고 train을 다시 실행)")
        if EFFECTIVENESS_COLUMN not in channels:
            raise DataError(f"적응 보정에 필요한 '{EFFECTIVENESS_COLUMN}'이 예측 구간 {horizon}을 덮지 않습니다.")
        adaptation = AdaptationModel.load(path)
        adaptation_inputs = (channels[EFFECTIVENESS_COLUMN], channels.get(VARIANT_COLUMN))

    run = recurrent_rollout(networks, panel, origin, blocks, exogenous, adaptation, adaptation_inputs,
                            config.adaptation.adapt_in_loop)
    out = _out_dir(args, config, "forecast")
    metadata = _metadata(config, "forecast", checkpoints=str(checkpoints), **{
        k: v for k, v in run.metadata.items() if k not in ("region_id", "seed")
    })
    metadata["checkpoint_seed"] = run.metadata.get("seed")
    forecast_path = out / "forecast.csv"
    run.to_frame().to_csv(forecast_path, index=False)
    write_sidecar(forecast_path, metadata)
    if run.unadapted is not None:
        raw_path = out / "forecast_unadapted.csv"
        run.to_frame(unadapted=True).to_csv(raw_path, index=False)
        write_sidecar(raw_path, metadata)
    print(f"예측 저장: {forecast_path} ({', '.join(run.indicators)}; {run.horizon})")
    return EXIT_OK


# ============================================
# evaluate
# ============================================
def cmd_evaluate(args) -> int:
    actual = read_indicator_series(Path(args.actual), args.indicator)
    predicted = read_indicator_series(Path(args.predicted), args.indicator)
    phases = _phases_from_args(args.phase)
    reports = evaluate_series(actual, predicted, phases, args.smoothing)
    rows = []
    for name, report in reports.items():
        print(f"{name} = {report.mean}")
        rows.append({"phase": name, "error": report.mean, "days": report.N, "included": report.included})
    path = Path(args.out) if args.out else output_dir() / "evaluation" / "evaluation.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)
    write_sidecar(path, {"command": "evaluate", "actual": args.actual, "predicted": args.predicted,
                         "indicator": args.indicator, "smoothing_window": args.smoothing})
    logger.info(f"평가 저장: {path}")
    return EXIT_OK


# ============================================
# ablate
# ============================================
def cmd_ablate(args) -> int:
    config = _load(args)
    if config.phases is None:
        raise ConfigError("ablation에는 [phases] 섹션(spread, peak, decay)이 필요합니다.")
    region = load_region(config)
    result = ablation_study(
        region.panel, config.phases,
        groups=config.feature_groups,
        optimized_inputs=config.optimized_inputs,
        train_config=config.train,
        train_range=config.train_range,
        mode=args.mode,
        smoothing_window=config.error_smoothing_window,
        workers=args.workers,
    )
    out = _out_dir(args, config, "ablation")
    path = out / "ablation.csv"
    result.errors.to_csv(path, index_label="phase")
    write_sidecar(path, _metadata(config, "ablate", mode=args.mode, runs=result.runs,
                                  failed=sorted(result.failed)))
    print(result.errors.to_string(float_format=lambda v: f"{v:.3f}"))
    reference = REFERENCE_VALUES.get("tokyo_opt_phase_errors")
    if reference:
        print(f"(참고값, 검증 기준 아님: 보고된 Opt. 단계 오차 {reference})")
    if result.failed:
        for name, message in result.failed.items():
            print(f"실패: {name}: {message}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ============================================
# 진입점
# ============================================
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="forecast_cli",
        description="백신 효과/변이 지수를 반영한 유행 지표 예측",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="DEBUG 로그 출력")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    workers = int(get_default("calibration", "workers", default=1))

    p = sub.add_parser("synth", help="합성 지역 데이터 생성")
    p.add_argument("--out", required=True, help="출력 디렉토리")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--days", type=int, default=400)
    p.add_argument("--population", type=int, default=1_000_000)
    p.add_argument("--start", default="2020-08-01", help="시작일 (YYYY-MM-DD)")
    p.add_argument("--external", action="store_true", help="고접종 외부 지역도 생성")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("calibrate", help="(s, a3) 격자 탐색")
    p.add_argument("--config", required=True, help="실행 설정 파일 (.ini)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--runner", choices=("seir", "lstm"), default="seir")
    p.add_argument("--workers", type=int, default=workers)
    p.add_argument("--out", help="출력 디렉토리 (기본: <output>/calibration)")
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("train", help="지표별 네트워크 학습")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--blind", action="store_true", help="백신 효과 입력 없이 학습")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="체크포인트 디렉토리 (기본: <output>/checkpoints)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("forecast", help="재귀 예측")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoints", help="체크포인트 디렉토리 (기본: <output>/checkpoints)")
    p.add_argument("--blocks", type=int, help="14일 블록 수 (기본: [run] blocks)")
    p.add_argument("--origin", help="마지막 관측일 (기본: 시험 구간 시작 전날)")
    p.add_argument("--adapt", action="store_true", help="적응 모델 보정 적용")
    p.add_argument("--out", help="출력 디렉토리 (기본: <output>/forecast)")
    p.set_defaults(handler=cmd_forecast)

    p = sub.add_parser("evaluate", help="상대 오차 계산")
    p.add_argument("--actual", required=True)
    p.add_argument("--predicted", required=True)
    p.add_argument("--indicator", default="dpc")
    p.add_argument("--phase", action="append", default=[], help="NAME=YYYY-MM-DD..YYYY-MM-DD (반복)")
    p.add_argument("--smoothing", type=int, default=1, help="이동평균 일수")
    p.add_argument("--out", help="결과 CSV 경로 (기본: <output>/evaluation/evaluation.csv)")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="데이터셋 그룹 제외 실험")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=("rolling_origin", "recurrent"), default="rolling_origin")
    p.add_argument("--workers", type=int, default=workers)
    p.add_argument("--out", help="출력 디렉토리 (기본: <output>/ablation)")
    p.set_defaults(handler=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"사용법 오류: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, ArgumentError) as exc:
        logger.error(f"{args.command} 실패: {exc}")
        print(f"데이터/설정 오류: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        logger.error(f"{args.command} 실패: {exc}", exc_info=True)
        print(f"실행 실패: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
