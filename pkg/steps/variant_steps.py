"""
변이 감염력 지수 Step Definitions
"""
import json
import logging
from datetime import date, timedelta

import numpy as np
from pytest_bdd import given, when, then, parsers

from steps.common_steps import assert_close, capture_error, parse_values
from utils.timeseries import DailySeries, DateRange
from utils.variant import (
    VariantTable,
    infectivity_index,
    interpolate_daily,
    normalize_infectivity,
    raw_infectivity,
)

logger = logging.getLogger(__name__)


def _names(text: str):
    return tuple(part.strip() for part in text.split(",") if part.strip())


@given(parsers.parse('변이 "{names}"의 점유율 "{shares}"이 "{start}"부터 매주 관측되었다'))
def weekly_variant_shares(bdd_context, names, shares, start):
    rows = json.loads(shares)
    first = date.fromisoformat(start)
    bdd_context['variant_names'] = _names(names)
    bdd_context['week_starts'] = tuple(first + timedelta(weeks=k) for k in range(len(rows)))
    bdd_context['variant_shares'] = np.array(rows, dtype=float)


@given(parsers.parse('변이 가중치 "{weights}"와 스케일 α {alpha:g}, β {beta:g}'))
def variant_weights_and_scaling(bdd_context, weights, alpha, beta):
    bdd_context['variant_weights'] = tuple(parse_values(weights))
    bdd_context['variant_scaling'] = (alpha, beta)


@when("변이 표를 만든다")
def build_variant_table(bdd_context):
    alpha, beta = bdd_context['variant_scaling']
    bdd_context['table'] = capture_error(
        bdd_context,
        lambda: VariantTable(
            bdd_context['variant_names'],
            bdd_context['week_starts'],
            bdd_context['variant_shares'],
            bdd_context['variant_weights'],
            alpha,
            beta,
        ),
    )


@when(parsers.parse('"{start}".."{end}" 구간으로 일별 점유율을 보간한다'))
def interpolate_shares(bdd_context, start, end):
    bdd_context['daily_shares'] = interpolate_daily(bdd_context['table'], DateRange(start, end))


@then(parsers.parse('"{day}"의 "{name}" 점유율은 {expected:g}이다'))
def share_on_day_is(bdd_context, day, name, expected):
    value = bdd_context['daily_shares'][name].value_on(date.fromisoformat(day))
    assert abs(value - expected) < 1e-9, f"{day} {name} 점유율 {value} != {expected}"


@then("모든 날의 점유율 합은 1이다")
def shares_sum_to_one(bdd_context):
    total = sum(series.values for series in bdd_context['daily_shares'].values())
    assert_close(total, np.ones_like(total), tol=1e-12)


@when(parsers.parse('가중치 "{names}"으로 원시 지수를 계산한다'))
def raw_index_with_named_weights(bdd_context, names):
    table = bdd_context['table']
    shares = interpolate_daily(table, table.observed_range)
    weights = {name: 1.0 for name in _names(names)}
    capture_error(bdd_context, lambda: raw_infectivity(shares, weights))


@when(parsers.parse('"{start}".."{end}" 구간의 감염력 지수를 계산한다'))
def compute_infectivity_index(bdd_context, start, end):
    bdd_context['infectivity'] = infectivity_index(bdd_context['table'], DateRange(start, end))


@then(parsers.parse('"{day}"의 정규화 지수는 {expected:g}이다'))
def normalized_index_on_day_is(bdd_context, day, expected):
    value = bdd_context['infectivity'].normalized.value_on(date.fromisoformat(day))
    assert abs(value - expected) < 1e-12, f"{day} f̃={value} != {expected}"


@then("감염력 지수는 degenerate이다")
def infectivity_is_degenerate(bdd_context):
    assert bdd_context['infectivity'].degenerate


@then(parsers.parse("모든 날의 정규화 지수는 {expected:g}이다"))
def all_normalized_values_are(bdd_context, expected):
    assert np.all(bdd_context['infectivity'].normalized.values == expected)


@when(parsers.parse('원시 지수 "{values}"을 전역 범위 {gmin:g}..{gmax:g}, 스케일 {alpha:g}..{beta:g}로 정규화한다'))
def normalize_raw_values(bdd_context, values, gmin, gmax, alpha, beta):
    f = DailySeries("variant_infectivity_raw", date(2021, 3, 1), parse_values(values))
    bdd_context['normalized_raw'] = normalize_infectivity(f, alpha, beta, gmin, gmax)


@then(parsers.parse('정규화된 원시 지수는 "{expected}"이다'))
def normalized_raw_values_are(bdd_context, expected):
    assert_close(bdd_context['normalized_raw'].values, parse_values(expected), tol=1e-12)


@when(parsers.parse("무작위 변이 표 {count:d}개의 감염력 지수를 계산한다"))
def random_variant_tables(bdd_context, count):
    rng = np.random.default_rng(2021)
    results = []
    for _ in range(count):
        n_variants = int(rng.integers(1, 5))
        n_weeks = int(rng.integers(2, 11))
        shares = rng.dirichlet(np.ones(n_variants), size=n_weeks)
        weights = rng.uniform(0.0, 3.0, size=n_variants)
        alpha = float(rng.uniform(-1.0, 2.0))
        beta = alpha + float(rng.uniform(0.1, 2.0))
        weeks = tuple(date(2021, 1, 4) + timedelta(weeks=k) for k in range(n_weeks))
        table = VariantTable(tuple(f"v{j}" for j in range(n_variants)), weeks, shares, weights, alpha, beta)
        results.append(infectivity_index(table, table.observed_range))
    bdd_context['random_indices'] = results


@then("모든 지수는 [α, β] 안에 있고 양 끝을 달성한다")
def indices_within_scaling(bdd_context):
    for index in bdd_context['random_indices']:
        values = index.normalized.values
        assert values.min() >= index.alpha and values.max() <= index.beta
        if index.degenerate:
            assert np.all(values == index.alpha)
        else:
            assert abs(values.min() - index.alpha) < 1e-12
            assert abs(values.max() - index.beta) < 1e-12


@then("정규화 지수의 최대 위치는 원시 지수의 최대 위치이다")
def argmax_is_preserved(bdd_context):
    for index in bdd_context['random_indices']:
        if index.degenerate:
            continue
        raw = index.raw.values
        at = int(np.argmax(index.normalized.values))
        assert abs(raw[at] - raw.max()) < 1e-12, f"최대 위치 불일치: f[{at}]={raw[at]} < {raw.max()}"


def _random_table(rng: np.random.Generator) -> VariantTable:
    n_variants = int(rng.integers(2, 5))
    n_weeks = int(rng.integers(2, 11))
    shares = rng.dirichlet(np.ones(n_variants), size=n_weeks)
    weights = rng.uniform(0.5, 3.0, size=n_variants)
    weeks = tuple(date(2021, 1, 4) + timedelta(weeks=k) for k in range(n_weeks))
    return VariantTable(tuple(f"v{j}" for j in range(n_variants)), weeks, shares, weights, 1.0, 1.6)


@when(parsers.parse("무작위 변이 표 {count:d}개에서 가중치를 양수배 한 지수와 비교한다"))
def compare_scaled_weights(bdd_context, count):
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(count):
        table = _random_table(rng)
        base = infectivity_index(table, table.observed_range)
        if base.global_max - base.global_min < 1e-6:
            continue
        factor = float(rng.uniform(0.1, 10.0))
        scaled = infectivity_index(table.with_weights([w * factor for w in table.weights]), table.observed_range)
        worst = max(worst, float(np.max(np.abs(base.normalized.values - scaled.normalized.values))))
    logger.info(f"가중치 양수배 비교: 최대 차이 {worst:.3e}")
    bdd_context['max_diff'] = worst


@then("두 정규화 지수의 최대 차이는 1e-9 미만이다")
def scaled_indices_match(bdd_context):
    assert bdd_context['max_diff'] < 1e-9, f"최대 차이 {bdd_context['max_diff']}"


@when(parsers.parse("무작위 변이 표 {count:d}개에 가중치 0인 변이를 추가해 원시 지수를 비교한다"))
def compare_zero_weight_variant(bdd_context, count):
    rng = np.random.default_rng(78)
    pairs = []
    for _ in range(count):
        table = _random_table(rng)
        shares = interpolate_daily(table, table.observed_range)
        before = raw_infectivity(shares, table.weight_map)
        extra = dict(shares)
        extra["new"] = DailySeries("new", table.observed_range.start, rng.uniform(0.0, 1.0, size=len(before)))
        after = raw_infectivity(extra, {**table.weight_map, "new": 0.0})
        pairs.append((before.values, after.values))
    bdd_context['raw_pairs'] = pairs


@then("두 원시 지수의 최대 차이는 1e-12 미만이다")
def raw_indices_match(bdd_context):
    for before, after in bdd_context['raw_pairs']:
        assert_close(after, before, tol=1e-12)
