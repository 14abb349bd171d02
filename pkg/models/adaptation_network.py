"""
적응(adaptation) 네트워크
백신 효과를 모르는 예측 블록을 일별 (원시 예측, E, f̃) 입력으로 보정하는 작은 Dense 네트워크
"""
from __future__ import annotations

import logging
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from models.base_network import BaseNetwork
from models.lstm_network import derive_rng
from utils.errors import ArgumentError, DataError

logger = logging.getLogger(__name__)

# 입력 채널: 원시 예측, 백신 효과 E, 변이 지수 f̃
N_CHANNELS = 3


class AdaptationNet(BaseNetwork):
    """
    일별 공유 Dense 네트워크 (tanh 은닉층 1개)

    보정은 로그 공간에서 이루어진다:
        adapted = raw + (1 + raw) · expm1(log_scale · correction)
    출력층이 0으로 초기화되므로 학습 전에는 정확히 항등 변환이다.
    """

    kind = "adaptation"

    def __init__(self, hidden_size: int = 16, log_scale: float = 1.0, seed: int = 0):
        super().__init__()
        if hidden_size < 1:
            raise ArgumentError(f"hidden_size는 1 이상이어야 합니다: {hidden_size}")
        if not log_scale > 0:
            raise ArgumentError(f"log_scale은 0보다 커야 합니다: {log_scale}")
        self.hidden_size = int(hidden_size)
        self.log_scale = float(log_scale)
        self.seed = int(seed)
        rng = derive_rng(self.seed, "adaptation")
        bound = 1.0 / np.sqrt(N_CHANNELS)
        self.params["hidden.W"] = rng.uniform(-bound, bound, size=(N_CHANNELS, self.hidden_size))
        self.params["hidden.b"] = np.zeros(self.hidden_size)
        self.params["out.W"] = np.zeros((self.hidden_size, 1))
        self.params["out.b"] = np.zeros(1)

    def architecture(self) -> Dict[str, Any]:
        return {"hidden_size": self.hidden_size, "log_scale": self.log_scale, "seed": self.seed}

    @classmethod
    def from_architecture(cls, architecture: Mapping[str, Any]) -> "AdaptationNet":
        return cls(int(architecture["hidden_size"]), float(architecture["log_scale"]), int(architecture.get("seed", 0)))

    @staticmethod
    def stack_inputs(raw: np.ndarray, effectiveness: np.ndarray, infectivity: np.ndarray) -> np.ndarray:
        """(B, L) 채널 세 개를 (B, L, 3) 입력으로 결합"""
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        effectiveness = np.atleast_2d(np.asarray(effectiveness, dtype=float))
        infectivity = np.atleast_2d(np.asarray(infectivity, dtype=float))
        if not (raw.shape == effectiveness.shape == infectivity.shape):
            raise ArgumentError(
                f"적응 입력 길이가 다릅니다: raw{raw.shape}, E{effectiveness.shape}, f̃{infectivity.shape}"
            )
        return np.stack([raw, effectiveness, infectivity], axis=-1)

    def _features(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 3 or inputs.shape[2] != N_CHANNELS:
            raise ArgumentError(f"적응 입력 형태 {inputs.shape}가 (B, L, {N_CHANNELS})와 맞지 않습니다.")
        if not np.all(np.isfinite(inputs)):
            raise DataError("적응 입력에 유한하지 않은 값이 있습니다.")
        x = inputs.copy()
        x[..., 0] = np.log1p(np.maximum(inputs[..., 0], 0.0)) / self.log_scale
        return x

    def _correction(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        hidden = np.tanh(x @ self.params["hidden.W"] + self.params["hidden.b"])
        corr = (hidden @ self.params["out.W"])[..., 0] + self.params["out.b"][0]
        return corr, hidden

    def correction(self, inputs: np.ndarray) -> np.ndarray:
        """로그 공간 보정량 (B, L)"""
        corr, _ = self._correction(self._features(inputs))
        return corr

    def adapt(self, inputs: np.ndarray) -> np.ndarray:
        """보정된 예측 (B, L), 0 이상으로 제한"""
        raw = np.maximum(np.asarray(inputs, dtype=float)[..., 0], 0.0)
        corr = self.correction(inputs)
        return np.maximum(raw + (1.0 + raw) * np.expm1(self.log_scale * corr), 0.0)

    def _target_log(self, targets: np.ndarray) -> np.ndarray:
        return np.log1p(np.maximum(np.asarray(targets, dtype=float), 0.0)) / self.log_scale

    def loss(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        x = self._features(inputs)
        corr, _ = self._correction(x)
        return float(np.mean((x[..., 0] + corr - self._target_log(targets)) ** 2))

    def loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """로그 공간 평균제곱오차와 기울기"""
        x = self._features(inputs)
        corr, hidden = self._correction(x)
        target_log = self._target_log(targets)
        if target_log.shape != corr.shape:
            raise ArgumentError(f"타깃 형태 {target_log.shape}가 출력 형태 {corr.shape}와 다릅니다.")
        diff = x[..., 0] + corr - target_log
        loss = float(np.mean(diff ** 2))
        d_corr = (2.0 * diff / diff.size).reshape(-1, 1)
        h = hidden.reshape(-1, self.hidden_size)
        xf = x.reshape(-1, N_CHANNELS)
        d_hidden = (d_corr @ self.params["out.W"].T) * (1.0 - h * h)
        grads = {
            "hidden.W": xf.T @ d_hidden,
            "hidden.b": d_hidden.sum(axis=0),
            "out.W": h.T @ d_corr,
            "out.b": d_corr.sum(axis=0),
        }
        return loss, grads
