"""
시계열 정렬/정규화/평활/날짜 라벨 Step Definitions
"""
import logging
from datetime import date

import numpy as np
import pandas as pd
from pytest_bdd import given, when, then, parsers

from steps.common_steps import assert_close, capture_error, parse_values
from utils.timeseries import (
    DailySeries,
    DateRange,
    align_panel,
    build_day_labels,
    calendar_from_dates,
    minmax_normalize,
    moving_average,
)

logger = logging.getLogger(__name__)


# ============================================
# 입력 시계열
# ============================================
@given(parsers.parse('"{start}"부터 값 "{values}"인 시계열 "{name}"'))
def daily_series_from_values(bdd_context, start, values, name):
    series = DailySeries(name, start, parse_values(values))
    bdd_context.store.setdefault('series', []).append(series)


@given(parsers.parse('"{start}"부터 값 "{values}"인 관측 "{name}"'))
def observations_with_gaps(bdd_context, start, values, name):
    """결측(null)을 포함한 원시 관측은 pandas Series로 둔다"""
    raw = parse_values(values)
    index = pd.date_range(start, periods=len(raw), freq="D")
    bdd_context.store.setdefault('series', []).append(pd.Series(raw, index=index, name=name))


# ============================================
# 정렬
# ============================================
@when(parsers.parse('"{start}".."{end}" 구간으로 fill_limit {fill_limit:d} 정렬한다'))
def align_to_range(bdd_context, start, end, fill_limit):
    target = DateRange(start, end)
    bdd_context['fill_limit'] = fill_limit
    bdd_context['panel'] = capture_error(
        bdd_context, lambda: align_panel(bdd_context['series'], target, fill_limit=fill_limit)
    )


@then(parsers.parse('정렬된 "{name}" 값은 "{expected}"이다'))
def aligned_values_are(bdd_context, name, expected):
    panel = bdd_context['panel']
    assert panel is not None, f"정렬 실패: {bdd_context.get('error')}"
    assert_close(panel.column(name).values, parse_values(expected))


@then("정렬된 패널을 다시 정렬해도 같은 패널이다")
def alignment_is_idempotent(bdd_context):
    panel = bdd_context['panel']
    again = align_panel(list(panel.columns.values()), panel.date_range, fill_limit=bdd_context['fill_limit'])
    assert again == panel


# ============================================
# 정규화 / 평활
# ============================================
@when("전체 구간으로 min-max 정규화한다")
def normalize_full_range(bdd_context):
    series = bdd_context['series'][-1]
    bdd_context['normalized'], bdd_context['scaler'] = minmax_normalize(series)


@when(parsers.parse('"{start}".."{end}" 구간으로 min-max 정규화한다'))
def normalize_fit_range(bdd_context, start, end):
    series = bdd_context['series'][-1]
    bdd_context['normalized'], bdd_context['scaler'] = minmax_normalize(series, DateRange(start, end))


@then(parsers.parse('정규화 값은 "{expected}"이다'))
def normalized_values_are(bdd_context, expected):
    assert_close(bdd_context['normalized'].values, parse_values(expected), tol=1e-12)


@then("Scaler는 degenerate이다")
def scaler_is_degenerate(bdd_context):
    assert bdd_context['scaler'].degenerate


@when(parsers.parse("무작위 시계열 {count:d}개를 정규화 후 역변환한다"))
def normalize_and_invert_random(bdd_context, count):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(count):
        values = rng.uniform(-50.0, 5000.0, size=int(rng.integers(2, 60)))
        series = DailySeries("x", date(2021, 1, 1), values)
        normalized, scaler = minmax_normalize(series)
        restored = scaler.inverse(normalized.values)
        # 상대 크기 기준으로 비교
        worst = max(worst, float(np.max(np.abs(restored - values) / np.maximum(np.abs(values), 1.0))))
    bdd_context['max_diff'] = worst


@then("최대 상대 차이는 1e-12 미만이다")
def max_diff_below_tolerance(bdd_context):
    assert bdd_context['max_diff'] < 1e-12, f"최대 차이 {bdd_context['max_diff']}"


@when(parsers.parse("창 {window:d}일 이동평균을 계산한다"))
def compute_moving_average(bdd_context, window):
    series = bdd_context['series'][-1]
    bdd_context['smoothed'] = capture_error(bdd_context, lambda: moving_average(series, window))


@then(parsers.parse('이동평균 값은 "{expected}"이다'))
def moving_average_values_are(bdd_context, expected):
    assert_close(bdd_context['smoothed'].values, parse_values(expected), tol=1e-12)


# ============================================
# 날짜 라벨
# ============================================
@when(parsers.parse('"{start}".."{end}" 달력으로 라벨을 만든다'))
def labels_from_plain_calendar(bdd_context, start, end):
    calendar = calendar_from_dates(DateRange(start, end))
    bdd_context['labels'] = build_day_labels(calendar)


@when(parsers.parse('"{start}".."{end}" 달력에 공휴일 "{holiday}"과 긴급사태 전체 구간으로 라벨을 만든다'))
def labels_with_holiday_and_emergency(bdd_context, start, end, holiday):
    date_range = DateRange(start, end)
    calendar = calendar_from_dates(
        date_range,
        holidays=[date.fromisoformat(holiday)],
        emergency_ranges=[date_range],
    )
    bdd_context['labels'] = build_day_labels(calendar)


@when(parsers.parse('날짜 "{first}"과 "{second}"만 있는 달력으로 라벨을 만든다'))
def labels_from_gapped_calendar(bdd_context, first, second):
    calendar = [(date.fromisoformat(first), 0, 0), (date.fromisoformat(second), 0, 0)]
    bdd_context['labels'] = capture_error(bdd_context, lambda: build_day_labels(calendar))


@then(parsers.parse('근무 라벨은 "{expected}"이다'))
def work_labels_are(bdd_context, expected):
    work, _ = bdd_context['labels']
    assert work.name == "work_label"
    assert_close(work.values, parse_values(expected))


@then(parsers.parse('긴급사태 라벨은 "{expected}"이다'))
def emergency_labels_are(bdd_context, expected):
    _, emergency = bdd_context['labels']
    assert emergency.name == "emergency"
    assert_close(emergency.values, parse_values(expected))
