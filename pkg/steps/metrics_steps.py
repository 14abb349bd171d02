"""
예측 오차 지표 Step Definitions
"""
import logging
import math
from datetime import timedelta

import numpy as np
from pytest_bdd import given, when, then, parsers

from steps.common_steps import capture_error, parse_values
from utils.metrics import PhaseSpec, phase_errors, relative_error
from utils.timeseries import DailySeries, DateRange

logger = logging.getLogger(__name__)


@given(parsers.parse('"{start}"부터 관측 "{actual}"과 예측 "{predicted}"'))
def actual_and_predicted(bdd_context, start, actual, predicted):
    bdd_context['actual'] = DailySeries("dpc", start, parse_values(actual))
    bdd_context['predicted'] = DailySeries("dpc", start, parse_values(predicted))


@given(parsers.parse('단계 spread "{spread}", peak "{peak}", decay "{decay}"'))
def phase_ranges(bdd_context, spread, peak, decay):
    bdd_context['phases'] = PhaseSpec.from_mapping({"spread": spread, "peak": peak, "decay": decay})


@when("평균 상대 오차를 계산한다")
def compute_relative_error(bdd_context):
    bdd_context['report'] = capture_error(
        bdd_context, lambda: relative_error(bdd_context['actual'], bdd_context['predicted'])
    )


@when(parsers.parse("평활 창 {window:d}일로 평균 상대 오차를 계산한다"))
def compute_smoothed_relative_error(bdd_context, window):
    bdd_context['report'] = relative_error(bdd_context['actual'], bdd_context['predicted'], smoothing_window=window)


@then(parsers.parse("평균 상대 오차는 {expected:g}이다"))
def relative_error_is(bdd_context, expected):
    report = bdd_context['report']
    assert abs(report.mean - expected) < 1e-12, f"평균 상대 오차 {report.mean} != {expected}"


@then("평균 상대 오차는 정의되지 않는다")
def relative_error_is_nan(bdd_context):
    assert math.isnan(bdd_context['report'].mean)


@then(parsers.parse("제외된 날은 {count:d}일이다"))
def excluded_days_are(bdd_context, count):
    assert bdd_context['report'].excluded == count


@when("단계별 오차를 계산한다")
def compute_phase_errors(bdd_context):
    bdd_context['phase_reports'] = capture_error(
        bdd_context,
        lambda: phase_errors(bdd_context['actual'], bdd_context['predicted'], bdd_context['phases']),
    )


@then(parsers.parse('"{phase}" 단계 오차는 {expected:g}이다'))
def phase_error_is(bdd_context, phase, expected):
    value = bdd_context['phase_reports'][phase].mean
    assert abs(value - expected) < 1e-12, f"{phase} 오차 {value} != {expected}"


def _random_pair(rng: np.random.Generator, days: int):
    actual = rng.uniform(0.0, 500.0, size=days)
    actual[rng.random(days) < 0.1] = 0.0
    actual[0] = 100.0
    predicted = actual * rng.uniform(0.5, 1.5, size=days) + rng.uniform(0.0, 5.0, size=days)
    return DailySeries("dpc", "2021-07-01", actual), DailySeries("dpc", "2021-07-01", predicted)


@when(parsers.parse("무작위 관측/예측 쌍 {count:d}개를 양수배 해 일별 상대 오차를 비교한다"))
def compare_scaled_errors(bdd_context, count):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(count):
        actual, predicted = _random_pair(rng, int(rng.integers(5, 60)))
        factor = float(rng.uniform(0.01, 100.0))
        base = relative_error(actual, predicted).per_day
        scaled = relative_error(
            DailySeries("dpc", actual.start_date, actual.values * factor),
            DailySeries("dpc", predicted.start_date, predicted.values * factor),
        ).per_day
        assert np.array_equal(np.isnan(base), np.isnan(scaled)), "제외된 날이 달라졌습니다."
        mask = ~np.isnan(base)
        if mask.any():
            worst = max(worst, float(np.max(np.abs(base[mask] - scaled[mask]))))
    bdd_context['max_diff'] = worst


@then("일별 상대 오차의 최대 차이는 1e-12 미만이다")
def scaled_errors_match(bdd_context):
    assert bdd_context['max_diff'] < 1e-12, f"최대 차이 {bdd_context['max_diff']}"


@when(parsers.parse("무작위 관측/예측 쌍 {count:d}개를 세 단계로 나누어 오차를 계산한다"))
def compare_full_with_phases(bdd_context, count):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(count):
        days = int(rng.integers(6, 60))
        actual, predicted = _random_pair(rng, days)
        first, second = sorted(rng.choice(np.arange(1, days), size=2, replace=False))
        start = actual.start_date
        cuts = [0, int(first), int(second), days]
        phases = PhaseSpec(*(
            DateRange(start + timedelta(days=lo), start + timedelta(days=hi - 1))
            for lo, hi in zip(cuts, cuts[1:])
        ))
        reports = phase_errors(actual, predicted, phases)
        weighted = sum(
            reports[name].mean * reports[name].included for name in ("spread", "peak", "decay")
            if reports[name].included
        )
        included = sum(reports[name].included for name in ("spread", "peak", "decay"))
        worst = max(worst, abs(reports["full"].mean - weighted / included))
    bdd_context['max_diff'] = worst


@then("전체 오차와 가중 평균의 최대 차이는 1e-12 미만이다")
def full_equals_weighted_phases(bdd_context):
    assert bdd_context['max_diff'] < 1e-12, f"최대 차이 {bdd_context['max_diff']}"
