"""
SEIR 합성 지역 Step Definitions
"""
import logging

import numpy as np
import pandas as pd
from pytest_bdd import given, when, then, parsers

from steps.common_steps import assert_close, capture_error
from utils.dataset_groups import resolve_groups
from utils.synth import (
    SynthConfig,
    export_csv,
    fifo_population,
    generate,
    integrate_reference,
    rollout_schedule,
    takeover_scenario,
    takeover_shares,
)
from utils.timeseries import DailySeries
from utils.vaccination import EFFECTIVENESS_COLUMN

logger = logging.getLogger(__name__)


@given(parsers.parse("잡음 {noise:g}, seed {seed:d}인 {days:d}일 표준 시나리오"))
def standard_scenario(bdd_context, noise, seed, days):
    bdd_context['synth_config'] = takeover_scenario(days=days, seed=seed, noise=noise)


@given(parsers.parse("접종·변이·이동 효과가 없는 {days:d}일 기본 설정"))
def plain_config(bdd_context, days):
    bdd_context['synth_config'] = SynthConfig(days=days)


@given(parsers.parse("전파율 {beta0:g}, 하루 {substeps:d}스텝인 {days:d}일 설정"))
def unstable_config(bdd_context, beta0, substeps, days):
    bdd_context['synth_config'] = SynthConfig(days=days, beta0=beta0, substeps=substeps)


@when("합성 지역을 생성한다")
def generate_region(bdd_context):
    bdd_context['synth_output'] = capture_error(bdd_context, lambda: generate(bdd_context['synth_config']))


@when("합성 지역을 두 번 생성한다")
def generate_twice(bdd_context):
    config = bdd_context['synth_config']
    bdd_context['outputs'] = (generate(config), generate(config))


@when(parsers.parse("seed {seed:d}으로 바꿔 한 번 더 생성한다"))
def generate_with_other_seed(bdd_context, seed):
    config = bdd_context['synth_config']
    bdd_context['outputs'] = (generate(config), generate(config.with_changes(seed=seed)))


@then("두 패널은 같다")
def panels_equal(bdd_context):
    first, second = bdd_context['outputs']
    assert first.panel == second.panel
    pd.testing.assert_frame_equal(first.panel.to_frame(), second.panel.to_frame())


@then("두 패널은 다르다")
def panels_differ(bdd_context):
    first, second = bdd_context['outputs']
    assert not np.array_equal(first.panel.column("dpc").values, second.panel.column("dpc").values)


@then("두 결과의 정답 DPC는 같다")
def truths_equal(bdd_context):
    first, second = bdd_context['outputs']
    assert np.array_equal(first.true_dpc.values, second.true_dpc.values)


@then("관측 DPC는 정답 DPC와 같다")
def observed_equals_truth(bdd_context):
    output = bdd_context['synth_output']
    assert np.array_equal(output.panel.column("dpc").values, output.true_dpc.values)


@then("패널에 7개 그룹 컬럼이 모두 있다")
def all_group_columns_present(bdd_context):
    panel = bdd_context['synth_output'].panel
    for group in resolve_groups(range(1, 8)):
        missing = [c for c in group.columns if c not in panel]
        assert not missing, f"그룹 {group.id} 누락 컬럼: {missing}"


@then(parsers.parse('"{column}" 컬럼은 DPC를 {lag:d}일 늦춰 {fraction:g}배 한 값이다'))
def lagged_severity(bdd_context, column, lag, fraction):
    output = bdd_context['synth_output']
    truth = np.array(output.true_dpc.values)
    values = np.array(output.panel.column(column).values)
    assert_close(values[:lag], np.zeros(lag))
    assert_close(values[lag:], fraction * truth[:-lag], tol=1e-9 * max(1.0, truth.max()))


@then("매일 구획 합이 인구와 같다")
def compartments_conserved(bdd_context):
    output = bdd_context['synth_output']
    totals = output.compartments.sum(axis=1).to_numpy()
    population = output.config.population
    assert np.max(np.abs(totals - population)) < 1e-6 * population


@then(parsers.parse("정규화 감염력은 {low:g} 이상 {high:g} 이하이다"))
def infectivity_bounded(bdd_context, low, high):
    values = np.array(bdd_context['synth_output'].infectivity.values)
    assert values.min() >= low - 1e-12 and values.max() <= high + 1e-12


@when("합성 지역과 참조 적분을 모두 계산한다")
def generate_and_integrate(bdd_context):
    config = bdd_context['synth_config']
    output = generate(config)
    bdd_context['euler_peak'] = int(np.argmax(output.true_dpc.values))
    bdd_context['reference_peak'] = integrate_reference(config).peak_day
    logger.info(f"최고점 일차: Euler {bdd_context['euler_peak']}, 참조 {bdd_context['reference_peak']}")


@then(parsers.parse("두 최고점 일차의 차이는 {days:d}일 이하이다"))
def peaks_agree(bdd_context, days):
    assert abs(bdd_context['euler_peak'] - bdd_context['reference_peak']) <= days


@when(parsers.parse("잡음 {noise:g}로 설정을 만든다"))
def build_config_with_noise(bdd_context, noise):
    bdd_context['synth_config'] = capture_error(bdd_context, lambda: SynthConfig(noise=noise))


@when(parsers.parse("{weeks:d}주 중 {start:d}주차부터 {duration:d}주 동안의 대체 곡선을 만든다"))
def build_takeover_curve(bdd_context, weeks, start, duration):
    bdd_context['takeover'] = takeover_shares(weeks, start, duration)


@then(parsers.parse("{week:d}주차 점유율은 {expected:g}이다"))
def takeover_share_is(bdd_context, week, expected):
    assert abs(bdd_context['takeover'][week] - expected) < 1e-12


@when(parsers.parse("인구 {population:d}명, {days:d}일 접종 일정을 만든다"))
def build_rollout(bdd_context, population, days):
    bdd_context['rollout'] = rollout_schedule("2021-01-01", days, population)


@then(parsers.parse("1차 접종 합은 {count:d}명이다"))
def first_dose_total(bdd_context, count):
    assert float(np.sum(bdd_context['rollout'].doses[0].values)) == count


@then("2차 접종 누적은 1차 접종 누적을 넘지 않는다")
def second_dose_bounded(bdd_context):
    cumulative = np.cumsum(bdd_context['rollout'].matrix(), axis=1)
    assert np.all(cumulative[1] <= cumulative[0])
    assert np.all(cumulative[2] <= cumulative[1])


@when(parsers.parse("seed {seed:d}로 인구 {population:d}명, {days:d}일 FIFO 접종 이력을 만든다"))
def build_fifo_population(bdd_context, seed, population, days):
    bdd_context['fifo'] = fifo_population(np.random.default_rng(seed), population, days)


@then("모든 사람의 접종일은 엄격히 증가한다")
def histories_increase(bdd_context):
    _, histories = bdd_context['fifo']
    for history in histories:
        assert all(a < b for a, b in zip(history, history[1:])), history


@then("사람별 접종 횟수 합은 일일 접종 수 합과 같다")
def histories_match_counts(bdd_context):
    doses, histories = bdd_context['fifo']
    assert sum(len(h) for h in histories) == int(np.sum(doses.matrix()))


@when("합성 지역을 생성해 CSV로 내보낸다")
def export_region(bdd_context, tmp_path):
    bdd_context['exported'] = export_csv(generate(bdd_context['synth_config']), tmp_path / "synth")


@then(parsers.parse('"{names}" 파일이 만들어진다'))
def exported_files(bdd_context, names):
    paths = bdd_context['exported']
    expected = [n.strip() for n in names.split(",")]
    assert sorted(paths) == sorted(expected)
    assert all(path.exists() for path in paths.values())


@then(parsers.parse('패널 CSV는 {rows:d}행이고 "{column}" 컬럼이 없다'))
def exported_panel_shape(bdd_context, rows, column):
    frame = pd.read_csv(bdd_context['exported']["panel"], index_col="date")
    assert len(frame) == rows
    assert column not in frame.columns


@when(parsers.parse("{days:d}일 표준 시나리오 {count:d}개에서 백신 효과를 매일 올린 짝 실행을 비교한다"))
def paired_effectiveness_runs(bdd_context, days, count):
    pairs = []
    for seed in range(count):
        rng = np.random.default_rng(100 + seed)
        config = takeover_scenario(days=days, seed=seed, noise=0.0)
        base = generate(config)
        raised = np.minimum(base.effectiveness.values + rng.uniform(0.0, 0.1, size=days), 1.0)
        override = DailySeries(EFFECTIVENESS_COLUMN, config.start_date, raised)
        higher = generate(config.with_changes(effectiveness_override=override))
        population = config.population
        pairs.append((
            population - float(base.compartments["S"].iloc[-1]),
            population - float(higher.compartments["S"].iloc[-1]),
        ))
    logger.info(f"짝 실행 누적 감염: {pairs}")
    bdd_context['infection_pairs'] = pairs


@then("모든 짝에서 효과를 올린 쪽의 누적 감염이 더 크지 않다")
def higher_effectiveness_never_adds_infections(bdd_context):
    for base, higher in bdd_context['infection_pairs']:
        assert higher <= base + 1e-6, f"누적 감염 {base:.3f} → {higher:.3f}"
