"""
입력 수집 / 실행 설정 Step Definitions
CSV 내용은 '|'로 행을 구분한 한 줄 문자열로 적는다
"""
import logging

import numpy as np
from pytest_bdd import given, when, then, parsers

from steps.common_steps import assert_close, capture_error, parse_values
from utils.errors import DataError, SchemaError
from utils.ingest import load_region, load_run_config, read_doses_csv, read_panel_csv, read_variants_csv
from utils.synth import export_csv, generate, takeover_scenario
from utils.vaccination import EFFECTIVENESS_COLUMN
from utils.variant import VARIANT_COLUMN

logger = logging.getLogger(__name__)


def _write_run_config(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@given(parsers.parse('파일 "{name}" 내용 "{rows}"'))
def write_csv_file(tmp_path, name, rows):
    (tmp_path / name).write_text(rows.replace("|", "\n") + "\n", encoding="utf-8")


@given(parsers.parse('그룹 "{groups}", 패널 "{panel}", 접종 "{doses}", 변이 "{variants}"인 실행 설정'))
def run_config_file(bdd_context, tmp_path, groups, panel, doses, variants):
    lines = [
        "[run]", "seed = 11", "",
        "[region]", "id = test-region", "population = 1000", f"panel = {panel}",
    ]
    if doses != "없음":
        lines.append(f"doses = {doses}")
    if variants != "없음":
        lines.append(f"variants = {variants}")
    lines += ["", "[features]", f"groups = {groups}"]
    bdd_context['run_config_path'] = _write_run_config(tmp_path / "run.ini", lines)


@given(parsers.parse('seed 없이 패널 "{panel}"만 있는 실행 설정'))
def run_config_without_seed(bdd_context, tmp_path, panel):
    lines = ["[run]", "blocks = 2", "", "[region]", "id = test-region", "population = 1000", f"panel = {panel}"]
    bdd_context['run_config_path'] = _write_run_config(tmp_path / "run.ini", lines)


@given(parsers.parse("seed {seed:d}, 잡음 {noise:g}로 내보낸 {days:d}일 합성 지역과 그 실행 설정"))
def exported_synthetic_region(bdd_context, tmp_path, seed, noise, days):
    output = generate(takeover_scenario(days=days, seed=seed, noise=noise))
    export_csv(output, tmp_path / "synth")
    bdd_context['synth_output'] = output
    table = output.variants
    lines = [
        "[run]", f"seed = {seed}", "",
        "[region]", "id = synth", f"population = {output.config.population}",
        "panel = synth/panel.csv", "doses = synth/doses.csv", "variants = synth/variants.csv", "",
        "[vaccination]", "include_infections = false", "",
        "[variant]", f"alpha = {table.alpha!r}", f"beta = {table.beta!r}", "",
        "[variant.weights]",
        *[f"{name} = {weight!r}" for name, weight in zip(table.variants, table.weights)],
    ]
    bdd_context['run_config_path'] = _write_run_config(tmp_path / "run.ini", lines)


@when("실행 설정을 읽는다")
def read_run_config(bdd_context):
    bdd_context['run_config'] = capture_error(bdd_context, lambda: load_run_config(bdd_context['run_config_path']))


@when(parsers.parse('없는 실행 설정 "{name}"를 읽는다'))
def read_missing_run_config(bdd_context, tmp_path, name):
    bdd_context['run_config'] = capture_error(bdd_context, lambda: load_run_config(tmp_path / name))


@when("지역을 로드한다")
def load_configured_region(bdd_context):
    def action():
        return load_region(load_run_config(bdd_context['run_config_path']))

    bdd_context['region'] = capture_error(bdd_context, action)


@when(parsers.parse('패널 CSV "{name}"를 읽는다'))
def read_panel(bdd_context, tmp_path, name):
    bdd_context['frame'] = capture_error(bdd_context, lambda: read_panel_csv(tmp_path / name))


@when(parsers.parse('접종 CSV "{name}"를 읽는다'))
def read_doses(bdd_context, tmp_path, name):
    bdd_context['doses'] = capture_error(bdd_context, lambda: read_doses_csv(tmp_path / name))


@when(parsers.parse('누적 형식 접종 CSV "{name}"를 읽는다'))
def read_cumulative_doses(bdd_context, tmp_path, name):
    bdd_context['doses'] = read_doses_csv(tmp_path / name, cumulative=True)


@when(parsers.parse('변이 CSV "{name}"를 읽는다'))
def read_variants(bdd_context, tmp_path, name):
    bdd_context['variants'] = capture_error(
        bdd_context, lambda: read_variants_csv(tmp_path / name, {"base": 1.0, "delta": 1.6})
    )


@when(parsers.parse('실행 설정 digest를 구한 뒤 "{name}"를 바꾸고 다시 구한다'))
def digest_before_and_after(bdd_context, tmp_path, name):
    before = load_run_config(bdd_context['run_config_path']).digest()
    path = tmp_path / name
    path.write_text(path.read_text(encoding="utf-8").replace(",12", ",13"), encoding="utf-8")
    after = load_run_config(bdd_context['run_config_path']).digest()
    bdd_context['digests'] = (before, after)


@then("두 digest는 다르다")
def digests_differ(bdd_context):
    before, after = bdd_context['digests']
    assert before != after


@then(parsers.parse('로드한 패널의 "{column}" 값은 "{values}"이다'))
def loaded_column_values(bdd_context, column, values):
    assert_close(bdd_context['region'].panel.column(column).values, parse_values(values))


@then(parsers.parse('로드한 패널의 그룹은 "{groups}"이다'))
def loaded_groups(bdd_context, groups):
    expected = tuple(int(g) for g in groups.split(","))
    assert bdd_context['region'].groups_present() == expected


@then(parsers.parse("스키마 오류 위치는 {line:d}행 \"{column}\" 컬럼이다"))
def schema_error_location(bdd_context, line, column):
    error = bdd_context['error']
    assert error.line == line, f"행 {error.line} != {line}"
    assert error.column == column, f"컬럼 {error.column} != {column}"


@then(parsers.parse('{dose:d}차 일일 접종은 "{values}"이다'))
def daily_doses_are(bdd_context, dose, values):
    assert_close(bdd_context['doses'].doses[dose - 1].values, parse_values(values))


@then(parsers.parse('로드한 패널의 "{column}"는 합성 정답과 같다'))
def loaded_column_matches_truth(bdd_context, column):
    output = bdd_context['synth_output']
    truth = {EFFECTIVENESS_COLUMN: output.effectiveness, VARIANT_COLUMN: output.infectivity}[column]
    assert_close(bdd_context['region'].panel.column(column).values, truth.values, tol=1e-9)


@then(parsers.parse("예측 구간 {days:d}일의 E와 f̃ 추정이 있다"))
def projections_available(bdd_context, days):
    projections = bdd_context['region'].projections(days)
    assert sorted(projections) == sorted([EFFECTIVENESS_COLUMN, VARIANT_COLUMN])
    for series in projections.values():
        assert len(series) == days
        assert np.all(np.isfinite(series.values))


# ============================================
# 손상된 입력
# ============================================
_VALID_CSV = {
    "패널": (
        "date,dpc,hc,work_label,transit_stations\n"
        + "".join(f"2021-03-{d:02d},{10 + d},{d % 3},{d % 2},{-5.5 + d}\n" for d in range(1, 15))
    ),
    "접종": (
        "date,dose1,dose2,dose3\n"
        + "".join(f"2021-03-{d:02d},{5 + d},{d % 4},{d % 2}\n" for d in range(1, 15))
    ),
}
_READERS = {"패널": read_panel_csv, "접종": read_doses_csv}
_JUNK_CELLS = ("abc", "", "-5", "1e400", "nan", "2021-13-45", '"', "1,2", "x y", "\x00", "０", "inf")


def _corrupt(text: str, rng: np.random.Generator) -> bytes:
    lines = text.splitlines()
    action = int(rng.integers(0, 6))
    if action == 0:
        row = int(rng.integers(0, len(lines)))
        cells = lines[row].split(",")
        cells[int(rng.integers(0, len(cells)))] = str(rng.choice(_JUNK_CELLS))
        lines[row] = ",".join(cells)
    elif action == 1:
        del lines[int(rng.integers(0, len(lines)))]
    elif action == 2:
        row = int(rng.integers(1, len(lines)))
        lines.insert(row, lines[row])
    elif action == 3:
        return "\n".join(lines).encode("utf-8")[:int(rng.integers(0, len(text)))]
    elif action == 4:
        data = bytearray("\n".join(lines).encode("utf-8"))
        data[int(rng.integers(0, len(data)))] = int(rng.integers(128, 256))
        return bytes(data)
    else:
        lines = lines[:int(rng.integers(0, len(lines)))]
    return ("\n".join(lines) + "\n").encode("utf-8")


@when(parsers.parse('정상 "{kind}" CSV를 무작위로 {count:d}번 망가뜨려 읽는다'))
def read_corrupted_csv(bdd_context, tmp_path, kind, count):
    rng = np.random.default_rng(31)
    reader = _READERS[kind]
    outcomes = []
    for attempt in range(count):
        path = tmp_path / f"corrupt_{attempt}.csv"
        path.write_bytes(_corrupt(_VALID_CSV[kind], rng))
        try:
            reader(path)
            outcomes.append(("ok", None, path))
        except DataError as exc:
            outcomes.append(("data", exc, path))
        except Exception as exc:
            outcomes.append(("crash", exc, path))
    logger.info(
        f"손상 CSV {count}개: 성공 {sum(o[0] == 'ok' for o in outcomes)}개, "
        f"데이터 오류 {sum(o[0] == 'data' for o in outcomes)}개"
    )
    bdd_context['corrupt_outcomes'] = outcomes


@then("모든 시도는 성공하거나 데이터 오류로 끝난다")
def corrupted_inputs_never_crash(bdd_context):
    crashes = [(path.read_bytes(), repr(exc)) for kind, exc, path in bdd_context['corrupt_outcomes'] if kind == "crash"]
    assert not crashes, f"처리되지 않은 예외: {crashes[:3]}"


@then("스키마 오류는 모두 파일 경로를 담고 있다")
def schema_errors_carry_path(bdd_context):
    for kind, exc, path in bdd_context['corrupt_outcomes']:
        if isinstance(exc, SchemaError):
            assert exc.path == str(path), f"{exc.path} != {path}"
            assert str(exc).startswith(str(path))
