"""
Base Network 클래스
모든 신경망 모델의 기본이 되는 클래스 (이름 붙은 파라미터, 평탄화, 체크포인트 저장/복원)
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from utils.errors import ArgumentError, DataError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
_HEADER_KEY = "__header__"


class BaseNetwork:
    """모든 네트워크의 기본 클래스"""

    kind = "base"

    def __init__(self):
        """
        BaseNetwork 초기화

        하위 클래스는 self.params에 이름 순서대로 파라미터 배열을 등록한다.
        """
        self.params: Dict[str, np.ndarray] = {}

    # ------------------------------------------------------------------
    # 하위 클래스 구현 대상
    # ------------------------------------------------------------------
    def architecture(self) -> Dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def from_architecture(cls, architecture: Mapping[str, Any]) -> "BaseNetwork":
        raise NotImplementedError

    def loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """배치 손실과 파라미터별 기울기"""
        raise NotImplementedError

    def loss(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        raise NotImplementedError

    # ------------------------------------------------------------------
    # 파라미터 관리
    # ------------------------------------------------------------------
    def parameter_names(self) -> List[str]:
        return list(self.params)

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def iter_params(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.params.items())

    def get_flat(self) -> np.ndarray:
        """모든 파라미터를 등록 순서대로 이어 붙인 1차원 복사본"""
        if not self.params:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.num_parameters:
            raise ArgumentError(f"파라미터 수가 다릅니다: {flat.size} != {self.num_parameters}")
        offset = 0
        for name, param in self.params.items():
            n = param.size
            self.params[name] = flat[offset:offset + n].reshape(param.shape).copy()
            offset += n

    def flatten_grads(self, grads: Mapping[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(grads[name]).ravel() for name in self.params])

    def copy_params(self) -> Dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.params.items()}

    def load_params(self, params: Mapping[str, np.ndarray]) -> None:
        missing = [name for name in self.params if name not in params]
        if missing:
            raise DataError(f"체크포인트에 없는 파라미터: {missing}")
        for name, param in self.params.items():
            value = np.asarray(params[name], dtype=float)
            if not np.all(np.isfinite(value)):
                raise DataError(f"파라미터 '{name}'에 유한하지 않은 값이 있습니다.")
            if value.shape != param.shape:
                raise DataError(f"파라미터 '{name}' 형태가 다릅니다: {value.shape} != {param.shape}")
            self.params[name] = value.copy()

    # ------------------------------------------------------------------
    # 체크포인트
    # ------------------------------------------------------------------
    def save(self, path: Union[str, Path], metadata: Optional[Mapping[str, Any]] = None) -> Path:
        """
        numpy .npz 아카이브로 저장 (파라미터 + JSON 헤더)

        Args:
            path: 저장 경로 (.npz)
            metadata: 헤더에 함께 기록할 값 (피처 컬럼, 스케일러, 학습 설정, seed 등)

        Returns:
            저장된 파일 경로
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": self.kind,
            "architecture": self.architecture(),
            "parameter_names": self.parameter_names(),
            "metadata": dict(metadata or {}),
        }
        arrays = {f"p{idx}": param for idx, param in enumerate(self.params.values())}
        with path.open("wb") as fh:
            np.savez(fh, **arrays, **{_HEADER_KEY: np.array(json.dumps(header, ensure_ascii=False))})
        logger.info(f"체크포인트 저장: {path} ({self.num_parameters} params)")
        return path

    @staticmethod
    def read_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        path = Path(path)
        if not path.exists():
            raise DataError(f"체크포인트 파일이 없습니다: {path}")
        with np.load(path, allow_pickle=False) as data:
            if _HEADER_KEY not in data:
                raise DataError(f"체크포인트 헤더가 없습니다: {path}")
            header = json.loads(str(data[_HEADER_KEY]))
            if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
                raise DataError(f"지원하지 않는 체크포인트 버전: {header.get('format_version')}")
            names = header["parameter_names"]
            params = {name: np.array(data[f"p{idx}"]) for idx, name in enumerate(names)}
        return header, params

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple["BaseNetwork", Dict[str, Any]]:
        """
        체크포인트에서 네트워크 복원

        Returns:
            (네트워크, 헤더 metadata)
        """
        header, params = cls.read_checkpoint(path)
        if cls.kind != "base" and header.get("kind") != cls.kind:
            raise DataError(f"체크포인트 종류가 다릅니다: {header.get('kind')} != {cls.kind}")
        net = cls.from_architecture(header["architecture"])
        net.load_params(params)
        logger.info(f"체크포인트 로드: {path}")
        return net, header.get("metadata", {})
