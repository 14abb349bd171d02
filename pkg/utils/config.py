"""
프로젝트 기본 설정 관리
config.json의 기본값을 읽고, .env 파일의 FORECAST_OUTPUT_DIR로 출력 경로만 덮어씀
"""
import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv  # type: ignore

# .env 파일 로드 (프로젝트 루트 기준)
project_root = Path(__file__).parent.parent
env_path = project_root / '.env'
load_dotenv(dotenv_path=env_path)

OUTPUT_DIR_ENV = "FORECAST_OUTPUT_DIR"

# config.json 캐싱
_config_cache: Optional[Dict[str, Any]] = None


def _load_config() -> Dict[str, Any]:
    """config.json 파일 로드"""
    global _config_cache
    if _config_cache is None:
        config_path = project_root / 'config.json'
        with open(config_path, 'r', encoding='utf-8') as f:
            _config_cache = json.load(f)
    return copy.deepcopy(_config_cache)


def get_default(*keys: str, default: Any = None) -> Any:
    """
    중첩 키로 기본값 조회

    Args:
        keys: 키 경로 (예: get_default("vaccination", "K"))
        default: 키가 없을 때 반환할 값

    Returns:
        설정 값 (없으면 default)
    """
    node: Any = _load_config()
    for key in keys:
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def output_dir(configured: Optional[Union[str, Path]] = None) -> Path:
    """
    출력 디렉터리 반환
    우선순위: 환경 변수 FORECAST_OUTPUT_DIR > 실행 설정 값 > config.json 기본값
    """
    # 함수 호출 시점에 확실히 로드되도록
    load_dotenv(dotenv_path=env_path)
    env_value = os.getenv(OUTPUT_DIR_ENV)
    if env_value:
        return Path(env_value)
    if configured:
        return Path(configured)
    return Path(get_default("output_dir", default="output"))
