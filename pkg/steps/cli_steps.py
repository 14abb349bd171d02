"""
명령행 도구 Step Definitions
명령 문자열의 {tmp}는 시나리오 임시 디렉토리로 바꾼다
"""
import importlib.util
import json
import logging
import shlex
from pathlib import Path

import numpy as np
import pandas as pd
from pytest_bdd import given, when, then, parsers

from utils.ingest import load_region, load_run_config
from utils.run_metadata import read_sidecar, sidecar_path

logger = logging.getLogger(__name__)

_CLI_PATH = Path(__file__).resolve().parent.parent / "scripts" / "forecast_cli.py"


def _load_cli():
    spec = importlib.util.spec_from_file_location("forecast_cli", _CLI_PATH)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


forecast_cli = _load_cli()


def _expand(text: str, tmp_path: Path) -> str:
    return text.replace("{tmp}", str(tmp_path))


def _run(command: str, tmp_path: Path, capsys) -> dict:
    argv = [] if command == "없음" else shlex.split(_expand(command, tmp_path))
    code = forecast_cli.main(argv)
    captured = capsys.readouterr()
    logger.info(f"명령 실행: {argv} → 종료 코드 {code}")
    return {"code": code, "stdout": captured.out, "stderr": captured.err}


@given(parsers.parse('명령 "{command}"으로 만든 지역'))
def prepared_region(tmp_path, capsys, command):
    result = _run(command, tmp_path, capsys)
    assert result["code"] == forecast_cli.EXIT_OK, result["stderr"]


def _append_sections(tmp_path, path, text):
    config = Path(_expand(path, tmp_path))
    with config.open("a", encoding="utf-8") as f:
        f.write(text)


@given(parsers.parse('실행 설정 "{path}"에 학습 epoch {epochs:d}, 은닉 크기 {hidden:d}를 지정한다'))
def shrink_training(tmp_path, path, epochs, hidden):
    _append_sections(tmp_path, path, f"\n[train]\nepochs = {epochs}\nhidden_size = {hidden}\n")


@when(parsers.parse('명령 "{command}"을 실행한다'))
def run_command(bdd_context, tmp_path, capsys, command):
    bdd_context['cli'] = _run(command, tmp_path, capsys)


@then(parsers.parse("종료 코드는 {code:d}이다"))
def exit_code_is(bdd_context, code):
    result = bdd_context['cli']
    assert result["code"] == code, f"종료 코드 {result['code']} != {code}\n{result['stderr']}"


@then(parsers.parse('"{path}" 파일이 있다'))
def file_exists(tmp_path, path):
    assert Path(_expand(path, tmp_path)).is_file(), f"파일 없음: {path}"


@then(parsers.parse('"{path}" 산출물의 메타데이터에 "{line}"이 기록된다'))
def sidecar_contains(tmp_path, path, line):
    sidecar = sidecar_path(_expand(path, tmp_path))
    assert sidecar.is_file(), f"메타데이터 파일 없음: {sidecar}"
    key, _, value = line.partition("=")
    metadata = read_sidecar(sidecar)
    assert metadata.get(key.strip()) == value.strip(), f"'{line}' 없음: {metadata}"
    assert "artifact_sha256" in metadata


@then(parsers.parse('예측 CSV "{path}"는 지표마다 {rows:d}행이다'))
def forecast_rows_per_indicator(tmp_path, path, rows):
    frame = pd.read_csv(_expand(path, tmp_path))
    counts = frame.groupby("indicator").size()
    assert "dpc" in counts.index
    assert (counts == rows).all(), counts.to_dict()


@then(parsers.parse('격자 CSV "{path}"는 {rows:d}행이다'))
def grid_rows(tmp_path, path, rows):
    frame = pd.read_csv(_expand(path, tmp_path))
    assert len(frame) == rows
    assert list(frame.columns) == ["s", "a3", "error", "status", "message"]


@then(parsers.parse('보정 파라미터 "{path}"에 "{first}"와 "{second}"가 있다'))
def calibrated_params_keys(tmp_path, path, first, second):
    data = json.loads(Path(_expand(path, tmp_path)).read_text(encoding="utf-8"))
    assert first in data and second in data, sorted(data)


@then(parsers.parse('출력에 "{text}"이 있다'))
def stdout_contains(bdd_context, text):
    assert text in bdd_context['cli']["stdout"], bdd_context['cli']["stdout"]


@given(parsers.parse('실행 설정 "{path}"에 학습 epoch {epochs:d}, 은닉 크기 {hidden:d}, 적응 epoch {adapt_epochs:d}을 지정한다'))
def shrink_training_and_adaptation(tmp_path, path, epochs, hidden, adapt_epochs):
    _append_sections(
        tmp_path, path,
        f"\n[train]\nepochs = {epochs}\nhidden_size = {hidden}\n\n[adaptation]\nepochs = {adapt_epochs}\n",
    )


@then(parsers.parse('오류 출력에 "{text}"이 있다'))
def stderr_contains(bdd_context, text):
    assert text in bdd_context['cli']["stderr"], bdd_context['cli']["stderr"]


@then(parsers.parse('합성 지역 설정 "{path}"으로 읽은 백신 효과는 seed {seed:d}, {days:d}일 합성 정답과 같다'))
def loaded_effectiveness_matches_truth(tmp_path, path, seed, days):
    config = load_run_config(_expand(path, tmp_path))
    assert not config.include_infections
    loaded = load_region(config).effectiveness.series
    truth = forecast_cli.generate(forecast_cli.takeover_scenario(
        start_date="2020-08-01", days=days, population=1_000_000, seed=seed)).effectiveness
    assert loaded.start_date == truth.start_date and len(loaded) == len(truth)
    diff = np.max(np.abs(np.asarray(loaded.values) - np.asarray(truth.values)))
    assert diff < 1e-9, f"합성 정답과 E(d) 차이 {diff}"
