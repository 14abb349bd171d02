"""
경사 하강 최적화기 (SGD, Adam)
"""
import logging
from typing import Dict, Mapping, Optional

import numpy as np

from utils.errors import ArgumentError

logger = logging.getLogger(__name__)


class Sgd:
    """확률적 경사 하강"""

    def __init__(self, learning_rate: float):
        if learning_rate < 0:
            raise ArgumentError(f"학습률은 0 이상이어야 합니다: {learning_rate}")
        self.learning_rate = learning_rate

    def step(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        if self.learning_rate == 0:
            return
        for name, grad in grads.items():
            params[name] -= self.learning_rate * grad


class Adam:
    """적응적 모멘트 추정"""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate < 0:
            raise ArgumentError(f"학습률은 0 이상이어야 합니다: {learning_rate}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        if self.learning_rate == 0:
            return
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            m = self._m.setdefault(name, np.zeros_like(grad))
            v = self._v.setdefault(name, np.zeros_like(grad))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            params[name] -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


OPTIMIZERS = {"sgd": Sgd, "adam": Adam}


def make_optimizer(name: str, learning_rate: float):
    try:
        factory = OPTIMIZERS[name.lower()]
    except KeyError:
        raise ArgumentError(f"알 수 없는 optimizer: {name} (지원: {sorted(OPTIMIZERS)})") from None
    return factory(learning_rate)


def clip_by_global_norm(grads: Dict[str, np.ndarray], clip_norm: Optional[float]) -> float:
    """전체 기울기 노름이 clip_norm을 넘으면 비례 축소, 축소 전 노름 반환"""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if clip_norm and norm > clip_norm:
        scale = clip_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm
