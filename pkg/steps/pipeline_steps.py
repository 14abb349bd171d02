"""
예측 파이프라인 Step Definitions
학습 윈도우 / 재귀 예측 / rolling-origin / 적응 보정
"""
import logging
from datetime import date, timedelta

import numpy as np
from pytest_bdd import given, when, then, parsers

from models.training import TrainConfig
from steps.common_steps import assert_close, capture_error
from utils.forecast_pipeline import (
    AdaptationConfig,
    AdaptationModel,
    ExogenousFutures,
    FeatureConfig,
    ForecastBlock,
    ForecastRun,
    IndicatorNetworks,
    apply_adaptation,
    build_windows,
    fit_adaptation,
    fit_scalers,
    recurrent_rollout,
    rolling_origin_forecast,
    train_indicator_networks,
)
from utils.metrics import relative_error
from utils.synth import generate, takeover_scenario
from utils.timeseries import DailySeries, DateRange, RegionPanel
from utils.vaccination import EFFECTIVENESS_COLUMN
from utils.variant import VARIANT_COLUMN

logger = logging.getLogger(__name__)

DPC_ONLY = FeatureConfig((("g1", ("dpc",)),))


class TruthLookupNet:
    """
    정규화된 입력 윈도우 → 다음 14일 정규화 정답을 돌려주는 조회 네트워크

    윈도우는 소수 6자리로 반올림한 바이트를 키로 쓴다.
    """

    def __init__(self, normalized: np.ndarray, window_length: int, block_length: int):
        self.table = {}
        for end in range(window_length, len(normalized) - block_length + 1):
            key = self._key(normalized[end - window_length:end].reshape(window_length, 1))
            self.table[key] = normalized[end:end + block_length].copy()

    @staticmethod
    def _key(window: np.ndarray) -> bytes:
        return np.round(np.asarray(window, dtype=float), 6).tobytes()

    def forward(self, window: np.ndarray) -> np.ndarray:
        return self.table[self._key(window)]


def _dpc_values(days: int) -> np.ndarray:
    d = np.arange(days, dtype=float)
    return 100.0 + 50.0 * np.sin(d / 9.0) + d


# ============================================
# 패널 / 윈도우
# ============================================
@given(parsers.parse('"{start}"부터 {days:d}일 동안의 DPC 전용 패널'))
def dpc_only_panel(bdd_context, start, days):
    date_range = DateRange.from_length(start, days)
    dpc = DailySeries("dpc", date_range.start, _dpc_values(days))
    bdd_context['panel'] = RegionPanel("lookup", date_range, {"dpc": dpc}, 1_000_000)


@given(parsers.parse('"{start}"부터 {days:d}일 동안의 DPC·SC 패널'))
def dpc_sc_panel(bdd_context, start, days):
    date_range = DateRange.from_length(start, days)
    dpc = _dpc_values(days)
    sc = 0.02 * dpc + 5.0 * np.cos(np.arange(days) / 5.0) + 10.0
    columns = {"dpc": DailySeries("dpc", date_range.start, dpc), "sc": DailySeries("sc", date_range.start, sc)}
    bdd_context['panel'] = RegionPanel("ckpt", date_range, columns, 1_000_000)


@when(parsers.parse("윈도우 {window:d}일로 학습 윈도우를 만든다"))
def make_training_windows(bdd_context, window):
    panel = bdd_context['panel']
    bdd_context['windows'] = capture_error(bdd_context, lambda: build_windows(panel, DPC_ONLY, "dpc", window))


@then(parsers.parse("학습 윈도우는 {count:d}개이다"))
def window_count_is(bdd_context, count):
    assert len(bdd_context['windows']) == count


@then(parsers.parse('첫 윈도우의 첫 타깃일은 "{day}"이다'))
def first_window_origin_is(bdd_context, day):
    first = bdd_context['windows'][0]
    assert first.origin == date.fromisoformat(day)
    assert first.inputs.shape == (14, 1) and first.target.shape == (14,)


# ============================================
# 정답 조회 네트워크로 재귀 예측
# ============================================
@given(parsers.parse('기준일 "{origin}"까지로 적합한 Scaler와 정답 조회 네트워크'))
def lookup_networks(bdd_context, origin):
    panel = bdd_context['panel']
    origin = date.fromisoformat(origin)
    history = panel.slice(DateRange(panel.date_range.start, origin))
    scalers = fit_scalers(history, ["dpc"])
    normalized = scalers["dpc"].transform(panel.column("dpc").values)
    net = TruthLookupNet(normalized, DPC_ONLY.window_length, DPC_ONLY.block_length)
    bdd_context['networks'] = IndicatorNetworks(DPC_ONLY, scalers, {"dpc": [net]}, TrainConfig())
    bdd_context['origin'] = origin


@when(parsers.parse('기준일 "{origin}"에서 {blocks:d}개 블록을 재귀 예측한다'))
def rollout_blocks(bdd_context, origin, blocks):
    bdd_context['blocks'] = blocks
    bdd_context['run'] = recurrent_rollout(
        bdd_context['networks'], bdd_context['panel'], date.fromisoformat(origin), blocks
    )


@when("기준일 이후 DPC를 1e6으로 바꾼 패널로 다시 예측한다")
def rollout_with_poisoned_future(bdd_context):
    panel = bdd_context['panel']
    cut = panel.date_range.offset(bdd_context['origin']) + 1
    values = np.array(panel.column("dpc").values)
    values[cut:] = 1e6
    poisoned = panel.with_columns([DailySeries("dpc", panel.date_range.start, values)])
    bdd_context['poisoned_run'] = recurrent_rollout(
        bdd_context['networks'], poisoned, bdd_context['origin'], bdd_context['blocks']
    )


@when(parsers.parse('기준일 "{origin}"에서 {blocks:d}개 블록을 rolling-origin 예측한다'))
def rolling_origin_blocks(bdd_context, origin, blocks):
    bdd_context['run'] = rolling_origin_forecast(
        bdd_context['networks'], bdd_context['panel'], date.fromisoformat(origin), blocks
    )


@when(parsers.parse('기준일 "{origin}"에서 항등 적응 모델과 함께 {blocks:d}개 블록을 재귀 예측한다'))
def rollout_with_identity_adaptation(bdd_context, origin, blocks):
    panel = bdd_context['panel']
    effectiveness = DailySeries(EFFECTIVENESS_COLUMN, panel.date_range.start, np.full(len(panel), 0.4))
    bdd_context['run'] = recurrent_rollout(
        bdd_context['networks'],
        panel,
        date.fromisoformat(origin),
        blocks,
        adaptation=AdaptationModel.identity(),
        adaptation_inputs=(effectiveness, None),
        adapt_in_loop=True,
    )


@then(parsers.parse("예측 구간은 {days:d}일이다"))
def horizon_length_is(bdd_context, days):
    run = bdd_context['run']
    assert len(run.horizon) == days
    assert run.horizon.start == bdd_context['origin'] + timedelta(days=1)


@then("예측 DPC는 기준일 이후 정답과 1e-9 이내로 같다")
def forecast_matches_truth(bdd_context):
    run = bdd_context['run']
    truth = bdd_context['panel'].column("dpc").slice(run.horizon)
    assert_close(run.series("dpc").values, truth.values, tol=1e-9)


@then("두 예측은 완전히 같다")
def forecasts_identical(bdd_context):
    first = bdd_context['run'].series("dpc").values
    second = bdd_context['poisoned_run'].series("dpc").values
    assert np.array_equal(first, second)


@then(parsers.parse('실행 metadata의 mode는 "{mode}"이다'))
def run_mode_is(bdd_context, mode):
    assert bdd_context['run'].metadata["mode"] == mode


@then("실행 metadata의 adapted는 참이다")
def run_is_adapted(bdd_context):
    run = bdd_context['run']
    assert run.metadata["adapted"] is True
    assert all(block.adapted for block in run.blocks["dpc"])


# ============================================
# 예측 블록 / 외생 변수
# ============================================
@when(parsers.parse('{days:d}일짜리 "{indicator}" 예측 블록을 만든다'))
def make_short_block(bdd_context, days, indicator):
    capture_error(bdd_context, lambda: ForecastBlock(indicator, date(2021, 5, 1), np.ones(days)))


@when(parsers.parse('음수가 섞인 "{indicator}" 예측 블록을 만든다'))
def make_negative_block(bdd_context, indicator):
    values = np.ones(14)
    values[3] = -1.0
    capture_error(bdd_context, lambda: ForecastBlock(indicator, date(2021, 5, 1), values))


@when(parsers.parse('이력 0..19에 대해 "{column}"의 미래 {days:d}일을 최근 패턴 반복으로 채운다'))
def hold_last_pattern(bdd_context, column, days):
    futures = ExogenousFutures().with_policy(column, "hold_last_pattern")
    bdd_context['future'] = futures.future_values(column, np.arange(20, dtype=float), date(2021, 5, 1), days, 14)


@then("미래 값은 6..19 다음 6..11이다")
def future_repeats_pattern(bdd_context):
    expected = np.concatenate([np.arange(6, 20), np.arange(6, 12)]).astype(float)
    assert np.array_equal(bdd_context['future'], expected)


# ============================================
# 체크포인트
# ============================================
@when(parsers.parse("DPC와 SC 네트워크를 {epochs:d} 에폭 학습해 체크포인트로 저장한 뒤 다시 읽는다"))
def train_save_and_load(bdd_context, epochs, tmp_path):
    features = FeatureConfig((("g1", ("dpc", "sc")),))
    config = TrainConfig(epochs=epochs, hidden_size=3, seed=5)
    networks = train_indicator_networks(bdd_context['panel'], features, config, indicators=("dpc", "sc"))
    directory = tmp_path / "checkpoints"
    bdd_context['saved_paths'] = networks.save(directory)
    bdd_context['networks'] = networks
    bdd_context['loaded'] = IndicatorNetworks.load(directory)


@then(parsers.parse('체크포인트 파일은 "{names}"이다'))
def checkpoint_files_are(bdd_context, names):
    expected = sorted(part.strip() for part in names.split(","))
    assert sorted(p.name for p in bdd_context['saved_paths']) == expected


@then("다시 읽은 네트워크의 피처 구성과 Scaler와 예측이 같다")
def loaded_networks_match(bdd_context):
    original = bdd_context['networks']
    loaded = bdd_context['loaded']
    assert loaded.features == original.features
    assert loaded.scalers == original.scalers
    assert loaded.indicators == original.indicators
    window = np.random.default_rng(9).uniform(size=(14, 2))
    for ind in original.indicators:
        assert np.array_equal(loaded.nets[ind][0].forward(window), original.nets[ind][0].forward(window))


# ============================================
# 적응 보정
# ============================================
@given(parsers.parse("백신 효과만큼 관측이 줄어든 학습 블록 {count:d}개"))
def adaptation_training_blocks(bdd_context, count):
    rng = np.random.default_rng(10)
    steps = np.arange(14, dtype=float)
    raw, eff, inf, obs = [], [], [], []
    for _ in range(count):
        level = rng.uniform(200.0, 3000.0)
        block = level * np.exp(rng.uniform(-0.04, 0.04) * steps)
        e0 = rng.uniform(0.05, 0.55)
        e = np.linspace(e0, e0 + rng.uniform(0.0, 0.1), 14)
        raw.append(block)
        eff.append(e)
        inf.append(np.full(14, rng.uniform(1.0, 1.6)))
        obs.append(block * (1.0 - e))
    bdd_context['adaptation_blocks'] = tuple(np.array(x) for x in (raw, eff, inf, obs))


@given("감소 단계의 백신 효과를 모르는 2블록 예측")
def decay_phase_run(bdd_context):
    origin = date(2021, 9, 1)
    start = origin + timedelta(days=1)
    truth = 2000.0 * np.exp(-0.03 * np.arange(28))
    effectiveness = np.linspace(0.3, 0.5, 28)
    blocks = (
        ForecastBlock("dpc", start, truth[:14]),
        ForecastBlock("dpc", start + timedelta(days=14), truth[14:]),
    )
    bdd_context['decay_run'] = ForecastRun("synth", origin, {"dpc": blocks})
    bdd_context['decay_observed'] = DailySeries("dpc", start, truth * (1.0 - effectiveness))
    bdd_context['decay_inputs'] = (
        DailySeries(EFFECTIVENESS_COLUMN, start, effectiveness),
        DailySeries(VARIANT_COLUMN, start, np.full(28, 1.3)),
    )


@when("적응 모델을 학습한다")
def train_adaptation_model(bdd_context):
    raw, eff, inf, obs = bdd_context['adaptation_blocks']
    bdd_context['adaptation'] = fit_adaptation(raw, eff, inf, obs, AdaptationConfig(epochs=300, seed=0))


@then("검증 보정 오차는 검증 원시 오차보다 작다")
def validation_improves(bdd_context):
    validation = bdd_context['adaptation'].validation
    logger.info(f"적응 검증 결과: {validation}")
    assert validation["blocks"] == 40
    assert validation["adapted_error"] < validation["raw_error"]


@when("예측에 적응 보정을 적용한다")
def apply_adaptation_to_run(bdd_context):
    effectiveness, infectivity = bdd_context['decay_inputs']
    bdd_context['adapted_run'] = apply_adaptation(
        bdd_context['adaptation'], bdd_context['decay_run'], effectiveness, infectivity
    )


@then("보정 예측의 오차는 보정 전 오차 이하이다")
def adapted_error_not_worse(bdd_context):
    observed = bdd_context['decay_observed']
    run = bdd_context['adapted_run']
    adapted = relative_error(observed, run.series("dpc")).mean
    unadapted = relative_error(observed, run.series("dpc", unadapted=True)).mean
    logger.info(f"감소 단계 오차: 보정 전 {unadapted:.4f}, 보정 후 {adapted:.4f}")
    assert adapted <= unadapted


@then("보정 전 블록이 실행 결과에 보존된다")
def unadapted_blocks_kept(bdd_context):
    run = bdd_context['adapted_run']
    original = bdd_context['decay_run']
    assert np.array_equal(run.series("dpc", unadapted=True).values, original.series("dpc").values)
    assert run.metadata["adapted"] is True


# ============================================
# 합성 지역 전체 실행 (느림)
# ============================================
@given(parsers.parse("seed {seed:d}, 잡음 0의 {days:d}일 합성 지역"))
def synthetic_region(bdd_context, seed, days):
    bdd_context['synth'] = generate(takeover_scenario(days=days, seed=seed, noise=0.0))


@when("최고점 21일 뒤를 기준일로 다섯 지표 네트워크를 학습하고 2블록 재귀 예측한다")
def train_and_forecast_synthetic(bdd_context):
    output = bdd_context['synth']
    panel = output.panel
    start = panel.date_range.start
    origin = start + timedelta(days=int(np.argmax(output.true_dpc.values)) + 21)
    features = FeatureConfig.from_groups(panel.column_names, (1, 5, 7))
    config = TrainConfig(epochs=80, hidden_size=16, learning_rate=0.01, seed=0)
    networks = train_indicator_networks(panel, features, config, DateRange(start, origin))
    exogenous = ExogenousFutures.defaults(
        features,
        networks.indicators,
        projected={name: panel.column(name) for name in (VARIANT_COLUMN, EFFECTIVENESS_COLUMN)},
    )
    run = recurrent_rollout(networks, panel, origin, 2, exogenous)
    bdd_context['synth_error'] = relative_error(panel.column("dpc").slice(run.horizon), run.series("dpc")).mean
    logger.info(f"합성 지역 2블록 DPC 오차: {bdd_context['synth_error']:.4f} (기준일 {origin})")


@then(parsers.parse("28일 DPC 평균 상대 오차는 {limit:g} 이하이다"))
def synthetic_error_within(bdd_context, limit):
    assert bdd_context['synth_error'] <= limit
