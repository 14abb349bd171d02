"""
백신 효과 / 코호트 재배분 Step Definitions
"""
import logging
from datetime import date, timedelta

import numpy as np
from pytest_bdd import given, when, then, parsers

from steps.common_steps import capture_error, parse_values
from utils.synth import fifo_population
from utils.timeseries import DailySeries, DateRange
from utils.vaccination import (
    DoseAdministrations,
    VaccinationParams,
    augment_with_infections,
    brute_force_effectiveness,
    effectiveness_around,
    effectiveness_curve,
    individual_effectiveness,
    population_effectiveness,
    reallocate_cohorts,
)

logger = logging.getLogger(__name__)


def _parse_sparse(entries: str, length: int) -> np.ndarray:
    """'0:3, 10:2' → 길이 length 배열 (나머지는 0)"""
    values = np.zeros(length)
    if entries.strip() == "없음":
        return values
    for item in filter(None, (part.strip() for part in entries.split(","))):
        offset, count = item.split(":")
        values[int(offset)] = float(count)
    return values


def _doses(bdd_context) -> DoseAdministrations:
    series = bdd_context['dose_series']
    return DoseAdministrations(tuple(series[t] for t in sorted(series)))


# ============================================
# 개별 효과
# ============================================
@given("기본 백신 파라미터")
def default_vaccination_params(bdd_context):
    bdd_context['params'] = VaccinationParams()


@when(parsers.parse("{dose:d}차 접종 {days:d}일 후의 개별 효과를 계산한다"))
def compute_individual_effectiveness(bdd_context, dose, days):
    params = bdd_context['params']
    bdd_context['individual'] = capture_error(bdd_context, lambda: individual_effectiveness(params, dose, days))


@then(parsers.parse("개별 효과는 {expected:g}이다"))
def individual_effectiveness_is(bdd_context, expected):
    value = bdd_context['individual']
    assert abs(value - expected) < 1e-12, f"개별 효과 {value} != {expected}"


@then(parsers.parse("1~3차 효과 곡선 {length:d}일이 개별 효과와 일치한다"))
def curves_match_scalar(bdd_context, length):
    params = bdd_context['params']
    for t in range(1, params.T + 1):
        curve = effectiveness_curve(params, t, length)
        scalar = [individual_effectiveness(params, t, i) for i in range(length)]
        assert np.array_equal(curve, np.array(scalar)), f"{t}차 곡선 불일치"


# ============================================
# 접종 기록 / 코호트
# ============================================
@given(parsers.parse('"{start}"부터 {dose:d}차 접종 "{values}"'))
def daily_doses(bdd_context, start, dose, values):
    bdd_context.store.setdefault('dose_series', {})[dose] = DailySeries(f"dose{dose}", start, parse_values(values))


@given(parsers.parse('"{start}"부터 {days:d}일 동안 {dose:d}차 접종 "{entries}"'))
def sparse_daily_doses(bdd_context, start, days, dose, entries):
    bdd_context.store.setdefault('dose_series', {})[dose] = DailySeries(
        f"dose{dose}", start, _parse_sparse(entries, days)
    )
    bdd_context['dose_start'] = date.fromisoformat(start)


@when("접종 기록을 만든다")
def build_dose_administrations(bdd_context):
    bdd_context['doses'] = capture_error(bdd_context, lambda: _doses(bdd_context))


@when(parsers.parse('인구 {population:d}명으로 "{day}" 기준 코호트를 재배분한다'))
def reallocate_up_to(bdd_context, population, day):
    doses = _doses(bdd_context)
    bdd_context['dose_start'] = doses.date_range.start
    bdd_context['ledger'] = reallocate_cohorts(doses, date.fromisoformat(day), population=population)


@then(parsers.parse('차수별 인원은 "{expected}"이다'))
def cohort_totals_are(bdd_context, expected):
    totals = bdd_context['ledger'].totals()
    assert list(totals) == parse_values(expected).tolist(), f"차수별 인원 {totals}"


@then(parsers.parse("미접종 인원은 {count:d}명이다"))
def unvaccinated_count_is(bdd_context, count):
    assert bdd_context['ledger'].unvaccinated == count


@then(parsers.parse('{dose:d}차 코호트는 "{entries}"이다'))
def dose_cohorts_are(bdd_context, dose, entries):
    start = bdd_context['dose_start']
    expected = {}
    for item in filter(None, (part.strip() for part in entries.split(","))):
        offset, count = item.split(":")
        expected[start + timedelta(days=int(offset))] = float(count)
    actual = {day: count for day, count in bdd_context['ledger'].dose_cohorts(dose).items() if count > 0}
    assert actual == expected, f"{dose}차 코호트 {actual} != {expected}"


@when(parsers.parse('확진자 "{values}"을 감염 면역으로 가산한다'))
def add_infection_immunity(bdd_context, values):
    dpc = DailySeries("dpc", bdd_context['dose_start'], parse_values(values))
    bdd_context['ledger'] = augment_with_infections(bdd_context['ledger'], dpc)


@then("장부는 상한 제한 표시를 가진다")
def ledger_is_clamped(bdd_context):
    assert bdd_context['ledger'].clamped


@then(parsers.parse("장부 총 인원은 {count:d}명이다"))
def ledger_total_is(bdd_context, count):
    assert abs(bdd_context['ledger'].total - count) < 1e-9


# ============================================
# 인구 수준 효과
# ============================================
@when(parsers.parse("인구 {population:d}명으로 인구 수준 효과를 계산한다"))
def compute_population_effectiveness(bdd_context, population):
    params = VaccinationParams().with_population(population)

    def run():
        doses = _doses(bdd_context)
        return population_effectiveness(doses, params, doses.date_range)

    bdd_context['effectiveness'] = capture_error(bdd_context, run)


@then(parsers.parse('"{day}"의 인구 수준 효과는 {expected:g}이다'))
def effectiveness_on_day_is(bdd_context, day, expected):
    value = bdd_context['effectiveness'].series.value_on(date.fromisoformat(day))
    assert abs(value - expected) < 1e-12, f"{day}: E={value} != {expected}"


@then("모든 날의 인구 수준 효과는 0이다")
def effectiveness_is_zero(bdd_context):
    assert np.all(bdd_context['effectiveness'].values == 0.0)


@when(parsers.parse("무작위 FIFO 인구 {count:d}개를 {days:d}일 동안 만들어 두 계산을 비교한다"))
def compare_with_person_level(bdd_context, count, days):
    """
    사람 단위 오라클과 코호트 계산 비교

    인구마다 무작위 20일을 골라 비교한다 (오라클 비용).
    """
    worst = 0.0
    for seed in range(count):
        rng = np.random.default_rng(seed)
        population = int(rng.integers(50, 1001))
        doses, histories = fifo_population(rng, population, days)
        params = VaccinationParams().with_population(population)
        series = population_effectiveness(doses, params, doses.date_range)
        sample = rng.choice(days, size=20, replace=False)
        for d in sample:
            oracle = brute_force_effectiveness(histories, params, int(d))
            worst = max(worst, abs(series.values[int(d)] - oracle))
    logger.info(f"FIFO 인구 {count}개 비교 완료: 최대 차이 {worst:.3e}")
    bdd_context['max_diff'] = worst


@then("두 계산의 최대 차이는 1e-12 미만이다")
def oracle_diff_below_tolerance(bdd_context):
    assert bdd_context['max_diff'] < 1e-12, f"최대 차이 {bdd_context['max_diff']}"


@when(parsers.parse('접종일 "{days}"인 사람의 효과를 사람 단위로 계산한다'))
def person_level_with_history(bdd_context, days):
    history = [int(v) for v in parse_values(days)]
    params = bdd_context['params']
    capture_error(bdd_context, lambda: brute_force_effectiveness([history], params, 10))


@when(parsers.parse('"{day}"의 잠복기 지연별 효과를 조회한다'))
def lookup_effectiveness_around(bdd_context, day):
    series = bdd_context['series'][-1]
    bdd_context['around'] = effectiveness_around(series, date.fromisoformat(day))


@then(parsers.parse("지연별 효과 최소는 {minimum:g}이고 최대는 {maximum:g}이다"))
def around_bounds_are(bdd_context, minimum, maximum):
    around = bdd_context['around']
    assert around.minimum == minimum and around.maximum == maximum


# ============================================
# 성질 검증
# ============================================
@when(parsers.parse("무작위 FIFO 인구 {count:d}개에서 차수별 최대 효과를 {delta:g}씩 올려 인구 효과를 비교한다"))
def compare_raised_peak(bdd_context, count, delta):
    worst = 0.0
    for seed in range(count):
        rng = np.random.default_rng(seed)
        population = int(rng.integers(50, 501))
        doses, _ = fifo_population(rng, population, 200)
        base = VaccinationParams().with_population(population)
        reference = population_effectiveness(doses, base, doses.date_range).values
        for t in range(base.T):
            a = list(base.a)
            a[t] = min(1.0, a[t] + delta)
            raised = VaccinationParams(a=tuple(a)).with_population(population)
            values = population_effectiveness(doses, raised, doses.date_range).values
            worst = max(worst, float(np.max(reference - values)))
    logger.info(f"최대 효과 상향 비교: 최대 감소 {worst:.3e}")
    bdd_context['worst_drop'] = worst


@then("최대 효과를 올린 쪽의 인구 효과가 모든 날에 크거나 같다")
def raised_peak_never_lowers(bdd_context):
    assert bdd_context['worst_drop'] <= 1e-12, f"최대 감소 {bdd_context['worst_drop']}"


@when(parsers.parse("무작위 1차 접종 일정 {count:d}개에 감쇠 기울기 0으로 인구 효과를 계산한다"))
def effectiveness_without_waning(bdd_context, count):
    diffs = []
    for seed in range(count):
        rng = np.random.default_rng(seed)
        days = 120
        first = rng.integers(0, 6, size=days).astype(float)
        zeros = np.zeros(days)
        doses = DoseAdministrations(tuple(
            DailySeries(f"dose{t}", "2021-03-01", values)
            for t, values in enumerate((first, zeros, zeros), start=1)
        ))
        params = VaccinationParams(s=0.0).with_population(10000)
        values = population_effectiveness(doses, params, doses.date_range).values
        diffs.append(float(np.min(np.diff(values))))
    bdd_context['min_daily_change'] = min(diffs)


@then("인구 효과의 일별 변화는 모두 0 이상이다")
def effectiveness_never_decreases(bdd_context):
    assert bdd_context['min_daily_change'] >= -1e-12, f"최소 일별 변화 {bdd_context['min_daily_change']}"


@when(parsers.parse("무작위 FIFO 인구 {count:d}개를 {days:d}일 동안 만들어 임의의 날짜에 코호트를 재배분한다"))
def reallocate_random_days(bdd_context, count, days):
    worst = 0.0
    for seed in range(count):
        rng = np.random.default_rng(seed)
        population = int(rng.integers(50, 501))
        doses, _ = fifo_population(rng, population, days)
        cumulative = doses.cumulative()
        for d in rng.choice(days, size=5, replace=False):
            d = int(d)
            ledger = reallocate_cohorts(doses, doses.date_range.start + timedelta(days=d), population=population)
            expected = [cumulative[t, d] - cumulative[t + 1, d] for t in range(doses.T - 1)]
            expected.append(cumulative[-1, d])
            worst = max(
                worst,
                float(np.max(np.abs(np.array(ledger.totals()) - np.array(expected)))),
                abs(ledger.total + ledger.unvaccinated - population),
                abs(ledger.unvaccinated - (population - cumulative[0, d])),
            )
    bdd_context['conservation_diff'] = worst


@then("차수별 인원은 누적 접종 차이와 같고 미접종 인원을 더하면 인구와 같다")
def ledger_is_conserved(bdd_context):
    assert bdd_context['conservation_diff'] < 1e-9, f"보존 오차 {bdd_context['conservation_diff']}"
