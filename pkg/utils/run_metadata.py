"""
실행 메타데이터 사이드카 (*.meta.txt)
산출물마다 설정 digest, seed, 보정 파라미터를 key = value 형식으로 남긴다
"""
import hashlib
import json
import logging
from datetime import date
from pathlib import Path
from typing import Any, Dict, Mapping, Union

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".meta.txt"


def _default(value: Any) -> Any:
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return str(value)


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"), default=_default)


def config_digest(data: Mapping[str, Any]) -> str:
    """정렬된 JSON 표현의 SHA-256"""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _format(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, Mapping):
        return canonical_json(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(_default(value)) if not isinstance(value, (str, int)) else str(value)


def sidecar_path(artifact: Union[str, Path]) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + SIDECAR_SUFFIX)


def write_sidecar(artifact: Union[str, Path], metadata: Mapping[str, Any]) -> Path:
    """산출물 옆에 <이름>.meta.txt 작성, 산출물 파일이 있으면 그 digest도 기록"""
    artifact = Path(artifact)
    lines = [f"artifact = {artifact.name}"]
    if artifact.is_file():
        lines.append(f"artifact_sha256 = {file_digest(artifact)}")
    for key, value in metadata.items():
        lines.append(f"{key} = {_format(value)}")
    path = sidecar_path(artifact)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"메타데이터 사이드카 저장: {path}")
    return path


def read_sidecar(path: Union[str, Path]) -> Dict[str, str]:
    """key = value 사이드카를 dict로 읽기 (# 주석/빈 줄 무시)"""
    result: Dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        result[key.strip()] = value.strip()
    return result
