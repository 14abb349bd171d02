"""
백신 파라미터 보정 / ablation / 입력 선택 Step Definitions
"""
import logging
import math

import numpy as np
import pandas as pd
from pytest_bdd import given, when, then, parsers

from models.training import TrainConfig
from utils.calibration import (
    DEFAULT_A3_GRID,
    DEFAULT_S_GRID,
    ForecastRunner,
    SeirReplicationRunner,
    ablation_study,
    evaluate_series,
    forecast_scorer,
    grid_search_vaccination,
    group_candidates,
    select_optimized_inputs,
)
from utils.errors import SimulationError
from utils.synth import generate, takeover_scenario
from utils.timeseries import DailySeries, DateRange
from utils.vaccination import VaccinationParams
from steps.common_steps import capture_error

logger = logging.getLogger(__name__)


def _names(text: str):
    return () if text == "없음" else tuple(part.strip() for part in text.split(",") if part.strip())


# ============================================
# 격자 탐색
# ============================================
@given("후보 파라미터와 무관하게 관측을 그대로 돌려주는 재현기")
def constant_runner(bdd_context):
    observed = bdd_context['synth'].panel.column("dpc")
    bdd_context['runner'] = lambda doses, params: observed


@given("s 0.21, a3 0.75에서 실패하고 (0.27, 0.95)에서 멀수록 오차가 커지는 재현기")
def distance_runner(bdd_context):
    observed = bdd_context['synth'].panel.column("dpc")

    def runner(doses, params):
        s, a3 = params.s, params.a[2]
        if math.isclose(s, 0.21) and math.isclose(a3, 0.75):
            raise SimulationError("재현 실패")
        scale = 1.0 + (0.27 - s) + (0.95 - a3)
        return observed.with_values(np.array(observed.values) * scale)

    bdd_context['runner'] = runner


@given("항상 실패하는 재현기")
def failing_runner(bdd_context):
    def runner(doses, params):
        raise SimulationError("재현 실패")

    bdd_context['runner'] = runner


def _grid_search(bdd_context, **kwargs):
    output = bdd_context['synth']
    return grid_search_vaccination(output.doses, output.panel.column("dpc"), bdd_context['runner'], **kwargs)


@when("기본 격자로 (s, a3)를 탐색한다")
def search_default_grid(bdd_context):
    bdd_context['grid'] = capture_error(bdd_context, lambda: _grid_search(bdd_context))


@when("빈 s 격자로 (s, a3)를 탐색한다")
def search_empty_grid(bdd_context):
    bdd_context['grid'] = capture_error(bdd_context, lambda: _grid_search(bdd_context, s_grid=()))


@when("기본 격자를 스레드 1개와 4개로 각각 탐색한다")
def search_sequential_and_parallel(bdd_context):
    bdd_context['grid_sequential'] = _grid_search(bdd_context, workers=1)
    bdd_context['grid_parallel'] = _grid_search(bdd_context, workers=4)


@when(parsers.parse("기본 격자를 뒤집은 순서와 무작위 순서 {count:d}가지로 탐색한다"))
def search_reordered_grids(bdd_context, count):
    rng = np.random.default_rng(9)
    orders = [(tuple(reversed(DEFAULT_S_GRID)), tuple(reversed(DEFAULT_A3_GRID)))]
    for _ in range(count):
        orders.append((tuple(rng.permutation(DEFAULT_S_GRID)), tuple(rng.permutation(DEFAULT_A3_GRID))))
    bdd_context['reordered_grids'] = [
        _grid_search(bdd_context, s_grid=s_grid, a3_grid=a3_grid) for s_grid, a3_grid in orders
    ]


@then(parsers.parse("모든 순서에서 최적 셀은 s {s:g}, a3 {a3:g}이다"))
def best_cell_for_every_order(bdd_context, s, a3):
    for result in bdd_context['reordered_grids']:
        best = result.best
        assert math.isclose(best.s, s) and math.isclose(best.a3, a3), f"최적 셀 ({best.s}, {best.a3})"


@then(parsers.parse("격자 셀은 {count:d}개이다"))
def grid_cell_count(bdd_context, count):
    assert len(bdd_context['grid'].cells) == count


@then(parsers.parse("최적 셀은 s {s:g}, a3 {a3:g}이다"))
def best_cell_is(bdd_context, s, a3):
    best = bdd_context['grid'].best
    assert math.isclose(best.s, s) and math.isclose(best.a3, a3), f"최적 셀 ({best.s}, {best.a3})"


@then(parsers.parse("최적 셀 오차는 {expected:g}이다"))
def best_cell_error(bdd_context, expected):
    assert abs(bdd_context['grid'].best.error - expected) < 1e-12


@then(parsers.parse("실패한 셀은 {count:d}개이다"))
def failed_cell_count(bdd_context, count):
    assert len(bdd_context['grid'].failed) == count


@then(parsers.parse('실패한 셀의 상태는 "{status}"이다'))
def failed_cell_status(bdd_context, status):
    for cell in bdd_context['grid'].failed:
        assert cell.status == status
        assert math.isnan(cell.error)
        assert cell.message


@then(parsers.parse("오차 행렬은 {rows:d}행 {cols:d}열이다"))
def error_matrix_shape(bdd_context, rows, cols):
    assert bdd_context['grid'].error_matrix().shape == (rows, cols)


@then("두 탐색의 셀 표가 같다")
def sequential_equals_parallel(bdd_context):
    pd.testing.assert_frame_equal(
        bdd_context['grid_sequential'].to_frame(), bdd_context['grid_parallel'].to_frame()
    )


@when("seed 0부터 9까지 정답 (s, a3)로 만든 관측을 SEIR 재현기로 격자 탐색한다")
def recover_grid_parameters(bdd_context):
    recovered = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        s_true = float(rng.choice(DEFAULT_S_GRID))
        a3_true = float(rng.choice(DEFAULT_A3_GRID))
        base = takeover_scenario(
            seed=seed, noise=0.02, vaccination=VaccinationParams().with_calibration(s_true, a3_true)
        )
        observed = generate(base).panel.column("dpc")
        result = grid_search_vaccination(
            base.doses, observed, SeirReplicationRunner(base), base_params=VaccinationParams()
        )
        hit = math.isclose(result.best.s, s_true) and math.isclose(result.best.a3, a3_true)
        recovered += hit
        logger.info(
            f"seed {seed}: 정답 ({s_true}, {a3_true}), 복원 ({result.best.s}, {result.best.a3}) "
            f"{'성공' if hit else '실패'}"
        )
    bdd_context['recovered'] = recovered


@then(parsers.parse("10개 중 {count:d}개 이상에서 정답 셀을 복원한다"))
def recovered_at_least(bdd_context, count):
    assert bdd_context['recovered'] >= count, f"복원 {bdd_context['recovered']}/10"


# ============================================
# Ablation
# ============================================
@given("DPC 입력이 빠지면 관측의 1.1배를 예측하는 실행기")
def dpc_sensitive_runner(bdd_context):
    actual = bdd_context['synth'].panel.column("dpc")

    def runner(features):
        if "dpc" in features.columns:
            return actual
        return actual.with_values(np.array(actual.values) * 1.1)

    bdd_context['feature_runner'] = runner


@given("기상 입력이 빠지면 실패하는 실행기")
def weather_sensitive_runner(bdd_context):
    actual = bdd_context['synth'].panel.column("dpc")

    def runner(features):
        if "temp_max" not in features.columns:
            raise SimulationError("기상 입력 없음")
        return actual

    bdd_context['feature_runner'] = runner


@when(parsers.parse('최적 입력 "{columns}"로 ablation을 실행한다'))
def run_ablation(bdd_context, columns):
    bdd_context['ablation'] = ablation_study(
        bdd_context['synth'].panel,
        bdd_context['phases'],
        runner=bdd_context['feature_runner'],
        optimized_inputs=_names(columns),
    )


@then(parsers.parse('실행 열은 "{runs}"이다'))
def ablation_runs_are(bdd_context, runs):
    assert bdd_context['ablation'].runs == list(_names(runs))


@then(parsers.parse('"{run}" 실행의 기준 대비 오차 변화는 {expected:g}이다'))
def ablation_delta_is(bdd_context, run, expected):
    delta = bdd_context['ablation'].delta(run)
    assert abs(delta - expected) < 1e-9, f"{run} 변화 {delta} != {expected}"


@then(parsers.parse('"{run}" 실행의 입력은 "{columns}"이다'))
def ablation_inputs_are(bdd_context, run, columns):
    assert bdd_context['ablation'].feature_sets[run] == _names(columns)


@then("실패한 실행은 없다")
def no_failed_runs(bdd_context):
    assert bdd_context['ablation'].failed == {}


@then(parsers.parse('"{run}" 실행은 실패로 기록되고 오차는 NaN이다'))
def ablation_run_failed(bdd_context, run):
    result = bdd_context['ablation']
    assert list(result.failed) == [run]
    assert result.errors[run].isna().all()
    assert not result.errors.drop(columns=[run]).isna().any().any()


# ============================================
# 입력 선택
# ============================================
@given(parsers.parse('후보 그룹 1 "{first}", 그룹 2 "{second}"'))
def candidate_groups(bdd_context, first, second):
    bdd_context['candidates'] = {1: _names(first), 2: _names(second)}


def _toy_score(columns):
    return 1.0 - 0.3 * ("dpc" in columns) - 0.2 * ("transit_stations" in columns) + 0.05 * len(columns)


@when("dpc와 transit_stations가 오차를 줄이고 입력 수마다 0.05가 늘어나는 점수로 입력을 선택한다")
def select_inputs(bdd_context):
    bdd_context['selection'] = select_optimized_inputs(bdd_context['candidates'], _toy_score)


@when(parsers.parse('필수 입력 "{required}"와 함께 dpc와 transit_stations가 오차를 줄이고 입력 수마다 0.05가 늘어나는 점수로 입력을 선택한다'))
def select_inputs_with_required(bdd_context, required):
    bdd_context['selection'] = select_optimized_inputs(
        bdd_context['candidates'], _toy_score, required=_names(required)
    )


@then(parsers.parse('선택된 입력은 "{columns}"이다'))
def selected_inputs_are(bdd_context, columns):
    assert bdd_context['selection'].columns == _names(columns)


@then(parsers.parse("선택 점수는 {expected:g}이다"))
def selection_score_is(bdd_context, expected):
    assert abs(bdd_context['selection'].score - expected) < 1e-12


@then(parsers.parse('선택된 입력에 "{column}"가 포함된다'))
def selection_contains(bdd_context, column):
    assert column in bdd_context['selection'].columns


@when(parsers.parse('그룹 "{groups}"의 후보 컬럼을 모은다'))
def collect_group_candidates(bdd_context, groups):
    ids = [int(g) for g in _names(groups)]
    bdd_context['group_candidates'] = group_candidates(bdd_context['synth'].panel, ids)


@then(parsers.parse('그룹 {group:d} 후보는 "{columns}"이다'))
def group_candidates_are(bdd_context, group, columns):
    assert bdd_context['group_candidates'][group] == _names(columns)


# ============================================
# 평가 / 실행기 검증
# ============================================
@when(parsers.parse('"{actual_start}"부터의 DPC와 "{predicted_start}"부터의 예측을 평가한다'))
def evaluate_disjoint(bdd_context, actual_start, predicted_start):
    actual = bdd_context['synth'].panel.column("dpc")
    predicted = DailySeries("dpc", predicted_start, np.ones(14))
    assert actual.start_date == DateRange.from_length(actual_start, 1).start
    bdd_context['evaluation'] = capture_error(bdd_context, lambda: evaluate_series(actual, predicted))


@when(parsers.parse('학습 구간 "{train}", 예측 구간 "{forecast}"로 예측 실행기를 만든다'))
def build_forecast_runner(bdd_context, train, forecast):
    def parse(text):
        start, _, end = text.partition("..")
        return DateRange(start, end)

    bdd_context['feature_runner'] = capture_error(
        bdd_context,
        lambda: ForecastRunner(bdd_context['synth'].panel, TrainConfig(), parse(train), parse(forecast)),
    )


@when(parsers.parse('그룹 "{groups}"의 후보에서 예측 오차 점수로 입력을 선택한다'))
def select_inputs_by_forecast(bdd_context, groups):
    panel = bdd_context['synth'].panel
    score = forecast_scorer(panel, bdd_context['feature_runner'], bdd_context['phases'].full)
    candidates = group_candidates(panel, [int(g) for g in _names(groups)])
    bdd_context['score'] = score
    bdd_context['selection'] = select_optimized_inputs(candidates, score)


@then(parsers.parse('입력 "{columns}"만 쓴 점수는 {expected:g}이다'))
def score_of_inputs(bdd_context, columns, expected):
    value = bdd_context['score'](_names(columns))
    assert abs(value - expected) < 1e-9, f"점수 {value} != {expected}"
