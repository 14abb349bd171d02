"""
네트워크 학습 루프, 유한 차분 기울기 검증, seed 앙상블 밴드
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from models.base_network import BaseNetwork
from models.optimizers import OPTIMIZERS, clip_by_global_norm, make_optimizer
from utils.config import get_default
from utils.errors import ArgumentError, TrainingDivergenceError

logger = logging.getLogger(__name__)

_TRAIN_DEFAULTS = get_default("train", default={})
DEFAULT_WINDOW_LENGTH = int(get_default("window_length", default=14))
# 기울기 검증에서 비교 대상으로 삼는 최소 크기
GRADIENT_FLOOR = 1e-10
# 상대 오차 분모의 하한 (유한 차분 반올림 오차 ~1e-11 수준)
RELATIVE_ERROR_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    """
    학습 설정

    Args:
        window_length: 입력 일수 W
        learning_rate: 학습률 (0이면 파라미터 고정)
        epochs: 에폭 수
        batch_size: 미니배치 크기
        seed: 초기화/셔플 seed
        optimizer: "sgd" 또는 "adam"
        loss: 손실 함수 (정규화된 타깃의 평균제곱오차만 지원)
        clip_norm: 전체 기울기 노름 상한 (None이면 미사용)
        hidden_size: 경로별 LSTM 은닉 크기
        depth: 경로별 LSTM 층 수
        ensemble: 앙상블 멤버 수
    """
    window_length: int = DEFAULT_WINDOW_LENGTH
    learning_rate: float = float(_TRAIN_DEFAULTS.get("learning_rate", 0.005))
    epochs: int = int(_TRAIN_DEFAULTS.get("epochs", 150))
    batch_size: int = int(_TRAIN_DEFAULTS.get("batch_size", 32))
    seed: int = 0
    optimizer: str = str(_TRAIN_DEFAULTS.get("optimizer", "adam"))
    loss: str = "mse"
    clip_norm: Optional[float] = _TRAIN_DEFAULTS.get("clip_norm", 5.0)
    hidden_size: int = int(_TRAIN_DEFAULTS.get("hidden_size", 32))
    depth: int = int(_TRAIN_DEFAULTS.get("depth", 1))
    ensemble: int = int(_TRAIN_DEFAULTS.get("ensemble", 1))

    def __post_init__(self):
        if self.window_length < 1:
            raise ArgumentError(f"window_length는 1 이상이어야 합니다: {self.window_length}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs는 1 이상이어야 합니다: {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size는 1 이상이어야 합니다: {self.batch_size}")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ArgumentError(f"학습률은 0 이상의 유한한 값이어야 합니다: {self.learning_rate}")
        if self.optimizer.lower() not in OPTIMIZERS:
            raise ArgumentError(f"알 수 없는 optimizer: {self.optimizer}")
        if self.loss != "mse":
            raise ArgumentError(f"지원하지 않는 손실 함수: {self.loss}")
        if self.ensemble < 1:
            raise ArgumentError(f"ensemble은 1 이상이어야 합니다: {self.ensemble}")

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainReport:
    """학습 결과 요약 (loss_curve[0]은 학습 전 전체 손실)"""
    loss_curve: List[float]
    best_epoch: int
    seed: int
    epochs: int
    samples: int
    grad_norms: List[float] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.loss_curve[0]

    @property
    def final_loss(self) -> float:
        return self.loss_curve[self.best_epoch]

    @property
    def decrease_ratio(self) -> float:
        """초기 대비 최종 손실 감소율"""
        if self.initial_loss == 0:
            return 0.0
        return 1.0 - self.final_loss / self.initial_loss

    def to_dict(self) -> Dict[str, Any]:
        return {
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "best_epoch": self.best_epoch,
            "epochs": self.epochs,
            "samples": self.samples,
            "seed": self.seed,
        }


def _window_digest(x: np.ndarray, y: np.ndarray) -> bytes:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=float).tobytes())
    return h.digest()


def stack_windows(windows: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    """
    (입력, 타깃) 목록을 정규 순서(내용 해시 순)로 쌓는다

    입력 목록의 순서와 무관하게 같은 배열을 만든다.
    """
    if not windows:
        raise ArgumentError("학습 윈도우가 비어 있습니다.")
    ordered = sorted(windows, key=lambda w: _window_digest(w[0], w[1]))
    inputs = np.stack([np.asarray(x, dtype=float) for x, _ in ordered])
    targets = np.stack([np.asarray(y, dtype=float) for _, y in ordered])
    return inputs, targets


def train(
    net: BaseNetwork,
    windows: Sequence[Tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    label: str = "",
) -> Tuple[BaseNetwork, TrainReport]:
    """
    미니배치 경사 하강 학습

    에폭마다 전체 학습 손실을 기록하고, 가장 낮은 손실의 파라미터로 복원한다.

    Args:
        net: 학습할 네트워크 (제자리에서 갱신)
        windows: (입력, 타깃) 목록
        config: 학습 설정
        label: 로그용 이름

    Returns:
        (학습된 네트워크, 학습 리포트)

    Raises:
        ArgumentError: 학습 윈도우가 비어 있을 때
        TrainingDivergenceError: 손실이 유한하지 않을 때 (에폭 번호 포함)
    """
    inputs, targets = stack_windows(windows)
    n = len(inputs)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config.optimizer, config.learning_rate)

    initial = net.loss(inputs, targets)
    if not math.isfinite(initial):
        raise TrainingDivergenceError(0, initial)
    curve = [initial]
    best_loss, best_epoch, best_params = initial, 0, net.copy_params()
    grad_norms: List[float] = []
    logger.info(f"학습 시작 {label}: 샘플 {n}개, 에폭 {config.epochs}, 초기 손실 {initial:.6f}")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        norm = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_loss, grads = net.loss_and_grads(inputs[idx], targets[idx])
            if not math.isfinite(batch_loss):
                raise TrainingDivergenceError(epoch, batch_loss)
            norm = clip_by_global_norm(grads, config.clip_norm)
            optimizer.step(net.params, grads)
        epoch_loss = net.loss(inputs, targets)
        if not math.isfinite(epoch_loss):
            raise TrainingDivergenceError(epoch, epoch_loss)
        curve.append(epoch_loss)
        grad_norms.append(norm)
        if epoch_loss < best_loss:
            best_loss, best_epoch, best_params = epoch_loss, epoch, net.copy_params()
        logger.debug(f"{label} epoch {epoch}: loss={epoch_loss:.6f}, grad_norm={norm:.4f}")

    net.load_params(best_params)
    report = TrainReport(curve, best_epoch, config.seed, config.epochs, n, grad_norms)
    logger.info(
        f"학습 완료 {label}: 손실 {report.initial_loss:.6f} → {report.final_loss:.6f} (best epoch {best_epoch})"
    )
    return net, report


def gradient_check(
    net: BaseNetwork,
    window: np.ndarray,
    target: np.ndarray,
    epsilon: float = 1e-5,
) -> float:
    """
    해석적 기울기와 중앙 유한 차분 (f(θ+ε) − f(θ−ε)) / 2ε 비교

    |analytic| + |numeric| > 1e-10 인 파라미터에 대해
    |a − n| / max(|a| + |n|, 1e-6) 의 최댓값을 반환한다.

    Raises:
        ArgumentError: epsilon이 (0, 1e-2] 범위를 벗어날 때
    """
    if not 0 < epsilon <= 1e-2:
        raise ArgumentError(f"epsilon은 (0, 1e-2] 범위여야 합니다: {epsilon}")
    inputs = np.asarray(window, dtype=float)
    targets = np.asarray(target, dtype=float)
    if inputs.ndim == 2:
        inputs = inputs[None]
    if targets.ndim == 1:
        targets = targets[None]
    _, grads = net.loss_and_grads(inputs, targets)
    analytic = net.flatten_grads(grads)
    theta = net.get_flat()
    numeric = np.zeros_like(theta)
    try:
        for k in range(theta.size):
            shifted = theta.copy()
            shifted[k] = theta[k] + epsilon
            net.set_flat(shifted)
            plus = net.loss(inputs, targets)
            shifted[k] = theta[k] - epsilon
            net.set_flat(shifted)
            minus = net.loss(inputs, targets)
            numeric[k] = (plus - minus) / (2.0 * epsilon)
    finally:
        net.set_flat(theta)
    scale = np.abs(analytic) + np.abs(numeric)
    mask = scale > GRADIENT_FLOOR
    if not np.any(mask):
        return 0.0
    denominator = np.maximum(scale[mask], RELATIVE_ERROR_FLOOR)
    error = float(np.max(np.abs(analytic[mask] - numeric[mask]) / denominator))
    logger.debug(f"기울기 검증: {theta.size} params, 최대 상대 오차 {error:.3e}")
    return error


def ensemble_band(members: np.ndarray, lower: float = 2.5, upper: float = 97.5) -> Tuple[np.ndarray, np.ndarray]:
    """
    앙상블 멤버 예측 (M × 일수)의 일별 백분위 밴드

    Returns:
        (하한, 상한)
    """
    members = np.asarray(members, dtype=float)
    if members.ndim != 2 or members.shape[0] < 1:
        raise ArgumentError(f"앙상블 예측은 (멤버, 일수) 2차원이어야 합니다: {members.shape}")
    return np.percentile(members, lower, axis=0), np.percentile(members, upper, axis=0)
