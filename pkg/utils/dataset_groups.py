"""
데이터셋 그룹 정의 로드 (dataset_schemas/dataset_groups.json)
그룹 1~7과 그룹별 컬럼, 예측 지표 목록
"""
import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from utils.errors import ArgumentError, ConfigError

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).parent.parent / "dataset_schemas"

# 예측 지표 (네트워크 A~E)
INDICATORS: Tuple[str, ...] = ("dpc", "sc", "hc", "dc", "cc")


@dataclass(frozen=True)
class DatasetItem:
    item: str
    column: str
    label: str
    kind: str
    allowed: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class DatasetGroup:
    """데이터셋 그룹 (id 1~7)과 소속 컬럼"""
    id: int
    name: str
    label: str
    items: Tuple[DatasetItem, ...]
    derived: bool = False
    optional: bool = False

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(item.column for item in self.items)


def load_schema(name: str) -> Dict:
    """dataset_schemas/<name>.json 로드"""
    path = SCHEMA_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"스키마 파일이 없습니다: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@lru_cache(maxsize=1)
def load_dataset_groups() -> Dict[int, DatasetGroup]:
    """그룹 id → DatasetGroup"""
    raw = load_schema("dataset_groups")
    groups: Dict[int, DatasetGroup] = {}
    for entry in raw.get("groups", []):
        items = tuple(
            DatasetItem(
                item["item"],
                item["column"],
                item.get("label", item["column"]),
                item.get("kind", "value"),
                tuple(item["allowed"]) if "allowed" in item else None,
            )
            for item in entry["items"]
        )
        group = DatasetGroup(
            int(entry["id"]),
            entry["name"],
            entry.get("label", entry["name"]),
            items,
            bool(entry.get("derived", False)),
            bool(entry.get("optional", False)),
        )
        groups[group.id] = group
    if sorted(groups) != list(range(1, 8)):
        raise ConfigError(f"데이터셋 그룹 id는 1~7이어야 합니다: {sorted(groups)}")
    return groups


def resolve_groups(group_ids: Iterable[int]) -> List[DatasetGroup]:
    """
    그룹 id 목록을 DatasetGroup 목록으로 변환

    Raises:
        ArgumentError: 알 수 없는 그룹 id
    """
    groups = load_dataset_groups()
    resolved = []
    for gid in group_ids:
        try:
            resolved.append(groups[int(gid)])
        except (KeyError, ValueError):
            raise ArgumentError(f"알 수 없는 데이터셋 그룹 id: {gid} (1~7)") from None
    return resolved


def group_of_column(column: str) -> Optional[int]:
    for group in load_dataset_groups().values():
        if column in group.columns:
            return group.id
    return None


def item_of_column(column: str) -> Optional[DatasetItem]:
    for group in load_dataset_groups().values():
        for item in group.items:
            if item.column == column:
                return item
    return None


def count_columns() -> Tuple[str, ...]:
    """0 이상이어야 하는 건수형 컬럼"""
    return tuple(
        item.column
        for group in load_dataset_groups().values()
        for item in group.items
        if item.kind == "count"
    )
