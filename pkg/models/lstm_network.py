"""
다중 경로 LSTM 예측 네트워크
데이터셋 그룹별 LSTM 경로 → 마지막 은닉 상태 연결 → Dense head (14일 출력)
순전파/역전파(BPTT)를 numpy로 직접 구현한다.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from models.base_network import BaseNetwork
from utils.config import get_default
from utils.errors import ArgumentError, DataError

logger = logging.getLogger(__name__)

BLOCK_LENGTH = int(get_default("block_length", default=14))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def derive_rng(seed: int, name: str) -> np.random.Generator:
    """seed와 이름에서 독립적인 난수 생성기 (경로별 초기화 고정)"""
    key = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([int(seed), key])


@dataclass(frozen=True)
class PathSpec:
    """하나의 LSTM 경로: 입력 컬럼 인덱스와 층 구성"""
    name: str
    columns: Tuple[int, ...]
    hidden_size: int = 32
    depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        if not self.columns:
            raise ArgumentError(f"경로 '{self.name}'에 입력 컬럼이 없습니다.")
        if self.hidden_size < 1 or self.depth < 1:
            raise ArgumentError(f"경로 '{self.name}'의 hidden_size/depth는 1 이상이어야 합니다.")

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "columns": list(self.columns), "hidden_size": self.hidden_size, "depth": self.depth}


@dataclass
class LstmLayerParams:
    """
    LSTM 층 파라미터 (게이트 i, f, o, g를 열 방향으로 이어 붙임)

    W: (input_size × 4H), U: (H × 4H), b: (4H,)
    """
    input_size: int
    hidden_size: int
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4 = 4 * self.hidden_size
        if self.W.shape != (self.input_size, h4) or self.U.shape != (self.hidden_size, h4) or self.b.shape != (h4,):
            raise ArgumentError(
                f"LSTM 파라미터 형태 불일치: W{self.W.shape}, U{self.U.shape}, b{self.b.shape} "
                f"(input={self.input_size}, hidden={self.hidden_size})"
            )

    def check_finite(self) -> None:
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.b))):
            raise DataError("LSTM 파라미터에 유한하지 않은 값이 있습니다.")

    @classmethod
    def initialize(cls, rng: np.random.Generator, input_size: int, hidden_size: int) -> "LstmLayerParams":
        """균등분포 [-1/√fanin, 1/√fanin] 초기화, forget 게이트 bias = 1"""
        bound = 1.0 / np.sqrt(input_size + hidden_size)
        W = rng.uniform(-bound, bound, size=(input_size, 4 * hidden_size))
        U = rng.uniform(-bound, bound, size=(hidden_size, 4 * hidden_size))
        b = np.zeros(4 * hidden_size)
        b[hidden_size:2 * hidden_size] = 1.0
        return cls(input_size, hidden_size, W, U, b)


def lstm_layer_forward(layer: LstmLayerParams, xs: np.ndarray) -> Tuple[np.ndarray, List[Tuple[np.ndarray, ...]]]:
    """
    xs: (B, steps, input) → hs: (B, steps, H)

    Returns:
        (은닉 상태 시퀀스, 역전파용 캐시)
    """
    batch, steps, _ = xs.shape
    H = layer.hidden_size
    h = np.zeros((batch, H))
    c = np.zeros((batch, H))
    hs = np.empty((batch, steps, H))
    cache = []
    xw = xs @ layer.W + layer.b
    for t in range(steps):
        z = xw[:, t] + h @ layer.U
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        h_prev, c_prev = h, c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((h_prev, c_prev, i, f, o, g, tc))
    return hs, cache


def lstm_layer_backward(
    layer: LstmLayerParams,
    xs: np.ndarray,
    cache: Sequence[Tuple[np.ndarray, ...]],
    dhs: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    시간 역전파 (BPTT)

    Args:
        dhs: (B, steps, H) 각 시점 은닉 상태에 대한 상류 기울기

    Returns:
        (dxs, dW, dU, db)
    """
    batch, steps, _ = xs.shape
    H = layer.hidden_size
    dW = np.zeros_like(layer.W)
    dU = np.zeros_like(layer.U)
    db = np.zeros_like(layer.b)
    dxs = np.zeros_like(xs)
    dh_next = np.zeros((batch, H))
    dc_next = np.zeros((batch, H))
    dz = np.empty((batch, 4 * H))
    for t in reversed(range(steps)):
        h_prev, c_prev, i, f, o, g, tc = cache[t]
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dW += xs[:, t].T @ dz
        dU += h_prev.T @ dz
        db += dz.sum(axis=0)
        dxs[:, t] = dz @ layer.W.T
        dh_next = dz @ layer.U.T
    return dxs, dW, dU, db


class MultiPathNet(BaseNetwork):
    """
    다중 경로 LSTM 네트워크

    각 경로는 입력 컬럼의 부분집합을 받아 LSTM 스택을 통과시키고,
    경로별 마지막 은닉 상태를 연결해 Dense head로 output_length 값을 출력한다.
    """

    kind = "multi_path_lstm"

    def __init__(
        self,
        paths: Sequence[PathSpec],
        n_features: int,
        output_length: int = BLOCK_LENGTH,
        seed: int = 0,
    ):
        """
        MultiPathNet 초기화

        Args:
            paths: 경로 구성 (모든 입력 컬럼을 정확히 한 번씩 덮어야 함)
            n_features: 입력 피처 수 F
            output_length: 출력 길이 (예측 블록 길이)
            seed: 초기화 seed (경로 이름별로 독립 파생)
        """
        super().__init__()
        self.paths = tuple(paths)
        self.n_features = int(n_features)
        self.output_length = int(output_length)
        self.seed = int(seed)
        if not self.paths:
            raise ArgumentError("경로가 하나 이상 필요합니다.")
        if len({p.name for p in self.paths}) != len(self.paths):
            raise ArgumentError("경로 이름이 중복되었습니다.")
        covered = sorted(c for p in self.paths for c in p.columns)
        if covered != list(range(self.n_features)):
            raise ArgumentError(
                f"경로가 입력 컬럼 0..{self.n_features - 1}을 정확히 한 번씩 덮지 않습니다: {covered}"
            )
        if self.output_length < 1:
            raise ArgumentError(f"output_length는 1 이상이어야 합니다: {self.output_length}")

        for path in self.paths:
            rng = derive_rng(self.seed, f"path:{path.name}")
            input_size = len(path.columns)
            for depth in range(path.depth):
                layer = LstmLayerParams.initialize(rng, input_size, path.hidden_size)
                self.params[f"{path.name}.{depth}.W"] = layer.W
                self.params[f"{path.name}.{depth}.U"] = layer.U
                self.params[f"{path.name}.{depth}.b"] = layer.b
                input_size = path.hidden_size
        merged = self.merged_size
        rng = derive_rng(self.seed, "head")
        bound = 1.0 / np.sqrt(merged)
        self.params["head.W"] = rng.uniform(-bound, bound, size=(merged, self.output_length))
        self.params["head.b"] = np.zeros(self.output_length)

    @property
    def merged_size(self) -> int:
        return sum(p.hidden_size for p in self.paths)

    def layer(self, path: PathSpec, depth: int) -> LstmLayerParams:
        input_size = len(path.columns) if depth == 0 else path.hidden_size
        return LstmLayerParams(
            input_size,
            path.hidden_size,
            self.params[f"{path.name}.{depth}.W"],
            self.params[f"{path.name}.{depth}.U"],
            self.params[f"{path.name}.{depth}.b"],
        )

    def architecture(self) -> Dict[str, Any]:
        return {
            "paths": [p.to_dict() for p in self.paths],
            "n_features": self.n_features,
            "output_length": self.output_length,
            "seed": self.seed,
        }

    @classmethod
    def from_architecture(cls, architecture: Mapping[str, Any]) -> "MultiPathNet":
        paths = [
            PathSpec(p["name"], tuple(p["columns"]), int(p["hidden_size"]), int(p["depth"]))
            for p in architecture["paths"]
        ]
        return cls(paths, int(architecture["n_features"]), int(architecture["output_length"]),
                   int(architecture.get("seed", 0)))

    @classmethod
    def single_path(cls, n_features: int, hidden_size: int = 8, depth: int = 1,
                    output_length: int = BLOCK_LENGTH, seed: int = 0) -> "MultiPathNet":
        path = PathSpec("all", tuple(range(n_features)), hidden_size, depth)
        return cls([path], n_features, output_length, seed)

    # ------------------------------------------------------------------
    # 순전파 / 역전파
    # ------------------------------------------------------------------
    def _check_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 3 or inputs.shape[2] != self.n_features or inputs.shape[1] < 1:
            raise ArgumentError(
                f"입력 형태 {inputs.shape}가 (배치, 윈도우, {self.n_features})와 맞지 않습니다."
            )
        if not np.all(np.isfinite(inputs)):
            raise DataError("입력 윈도우에 유한하지 않은 값이 있습니다.")
        return inputs

    def _forward(self, inputs: np.ndarray):
        caches = []
        finals = []
        for path in self.paths:
            xs = inputs[:, :, list(path.columns)]
            path_cache = []
            for depth in range(path.depth):
                layer = self.layer(path, depth)
                hs, cache = lstm_layer_forward(layer, xs)
                path_cache.append((layer, xs, cache))
                xs = hs
            caches.append(path_cache)
            finals.append(xs[:, -1])
        merged = np.concatenate(finals, axis=1)
        outputs = merged @ self.params["head.W"] + self.params["head.b"]
        return outputs, merged, caches

    def forward_batch(self, inputs: np.ndarray) -> np.ndarray:
        """(B, W, F) → (B, output_length)"""
        outputs, _, _ = self._forward(self._check_inputs(inputs))
        return outputs

    def forward(self, window: np.ndarray) -> np.ndarray:
        """
        단일 윈도우 (W × F) → output_length 벡터

        Raises:
            ArgumentError: 차원이 맞지 않을 때
            DataError: 유한하지 않은 입력
        """
        window = np.asarray(window, dtype=float)
        if window.ndim != 2:
            raise ArgumentError(f"윈도우는 (W, F) 2차원이어야 합니다: {window.shape}")
        return self.forward_batch(window[None])[0]

    def loss(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        outputs = self.forward_batch(inputs)
        return float(np.mean((outputs - np.asarray(targets, dtype=float)) ** 2))

    def loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """평균제곱오차와 모든 파라미터의 해석적 기울기"""
        inputs = self._check_inputs(inputs)
        targets = np.asarray(targets, dtype=float)
        outputs, merged, caches = self._forward(inputs)
        if targets.shape != outputs.shape:
            raise ArgumentError(f"타깃 형태 {targets.shape}가 출력 형태 {outputs.shape}와 다릅니다.")
        diff = outputs - targets
        loss = float(np.mean(diff ** 2))
        d_out = 2.0 * diff / diff.size

        grads: Dict[str, np.ndarray] = {
            "head.W": merged.T @ d_out,
            "head.b": d_out.sum(axis=0),
        }
        d_merged = d_out @ self.params["head.W"].T
        offset = 0
        for path, path_cache in zip(self.paths, caches):
            H = path.hidden_size
            batch, steps, _ = inputs.shape
            dhs = np.zeros((batch, steps, H))
            dhs[:, -1] = d_merged[:, offset:offset + H]
            offset += H
            for depth in reversed(range(path.depth)):
                layer, xs, cache = path_cache[depth]
                dxs, dW, dU, db = lstm_layer_backward(layer, xs, cache, dhs)
                grads[f"{path.name}.{depth}.W"] = dW
                grads[f"{path.name}.{depth}.U"] = dU
                grads[f"{path.name}.{depth}.b"] = db
                dhs = dxs
        return loss, {name: grads[name] for name in self.params}
