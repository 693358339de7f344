#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 配套的流式基分类器
- StreamingLDA: 递推式两类线性判别分析，每次更新 O(d^2)
- KNNClassifier: 保存历史样本的 k 近邻（k=3），不是递推式的
两者实现同一个接口：predict / update / reset / warm_start
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Protocol, Tuple, runtime_checkable

import numpy as np

from ecdd_settings import InputError, UsageError


logger = logging.getLogger('ecdd.classifiers')

# 共轭先验的伪样本数
DEFAULT_PRIOR_WEIGHT = 1.0


@dataclass(frozen=True)
class LabeledSample:
    """带二分类标签的特征向量"""

    features: np.ndarray
    label: int

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 1:
            raise InputError(f"特征必须是一维向量，收到形状 {features.shape}")
        if self.label != 0 and self.label != 1:
            raise InputError(f"标签必须是 0 或 1，收到 {self.label!r}")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'label', int(self.label))

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {'features': self.features.tolist(), 'label': self.label}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LabeledSample':
        return cls(features=np.asarray(data['features'], dtype=np.float64), label=data['label'])


@runtime_checkable
class Classifier(Protocol):
    """流式分类器接口"""

    @property
    def is_fitted(self) -> bool:
        """是否已经见过至少一个样本"""
        ...

    def predict(self, features: np.ndarray) -> int:
        """预测类别，不改变状态"""
        ...

    def update(self, sample: LabeledSample) -> None:
        """用一个带标签样本更新"""
        ...

    def reset(self) -> None:
        """丢弃全部已学内容"""
        ...

    def warm_start(self, samples: Iterable[LabeledSample]) -> None:
        """按顺序用一批样本更新，等价于逐个 update"""
        ...


class StreamingLDA:
    """递推式两类 LDA

    每类维护样本数和均值（增量均值），类内散度矩阵用 Welford 方式逐点累加，
    这些统计量与批量计算一致。预测时叠加一个单位权重的共轭先验：
    类均值向原点收缩 prior_weight 个伪样本，合并协方差从 prior_weight 个单位阵伪样本起步；
    先验取 n_c / n，求逆前在对角线上加 ridge_scale * trace / d。
    """

    def __init__(self, dim: Optional[int] = None, ridge_scale: float = 1e-6,
                 prior_weight: float = DEFAULT_PRIOR_WEIGHT):
        if ridge_scale <= 0:
            raise InputError(f"ridge_scale 必须为正，当前为 {ridge_scale}")
        if prior_weight < 0:
            raise InputError(f"prior_weight 不能为负，当前为 {prior_weight}")
        self._initial_dim = dim
        self.ridge_scale = ridge_scale
        self.prior_weight = prior_weight
        self.reset()

    def reset(self) -> None:
        self.dim = self._initial_dim
        self.n = 0
        self.counts = np.zeros(2, dtype=np.int64)
        if self.dim is None:
            self.means = None
            self.scatter = None
        else:
            self.means = np.zeros((2, self.dim))
            self.scatter = np.zeros((self.dim, self.dim))

    @property
    def is_fitted(self) -> bool:
        return self.n > 0

    def _check_dim(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if self.dim is not None and x.shape != (self.dim,):
            raise InputError(f"特征维度不匹配: 期望 {self.dim}，收到 {x.shape}")
        return x

    def update(self, sample: LabeledSample) -> None:
        x = self._check_dim(sample.features)
        if self.dim is None:
            self.dim = x.shape[0]
            self.means = np.zeros((2, self.dim))
            self.scatter = np.zeros((self.dim, self.dim))
        c = sample.label
        self.counts[c] += 1
        self.n += 1
        delta = x - self.means[c]
        self.means[c] += delta / self.counts[c]
        self.scatter += np.outer(delta, x - self.means[c])

    def warm_start(self, samples: Iterable[LabeledSample]) -> None:
        for sample in samples:
            self.update(sample)

    def shrunk_means(self) -> np.ndarray:
        """向原点收缩后的类均值 n_c * m_c / (n_c + prior_weight)"""
        total = self.counts + self.prior_weight
        weights = np.divide(self.counts, total, out=np.zeros(2), where=total > 0)
        return self.means * weights[:, None]

    def covariance(self) -> np.ndarray:
        """合并的类内协方差（含先验伪样本）"""
        if self.n == 0:
            raise UsageError("LDA 尚未见过任何样本")
        classes_seen = int(np.count_nonzero(self.counts))
        dof = self.n - classes_seen + self.prior_weight
        if dof <= 0:
            dof = self.n
        return (self.scatter + self.prior_weight * np.eye(self.dim)) / dof

    def predict(self, features: np.ndarray) -> int:
        if self.n == 0:
            raise UsageError("LDA 尚未见过任何样本，无法预测")
        x = self._check_dim(features)
        if self.counts[0] == 0:
            return 1
        if self.counts[1] == 0:
            return 0

        cov = self.covariance()
        trace = float(np.trace(cov))
        eps = self.ridge_scale * trace / self.dim if trace > 0 else self.ridge_scale
        regularized = cov + eps * np.eye(self.dim)
        means = self.shrunk_means()
        weights = np.linalg.solve(regularized, means.T)

        scores = []
        for c in (0, 1):
            w = weights[:, c]
            prior = self.counts[c] / self.n
            scores.append(x @ w - 0.5 * (means[c] @ w) + math.log(prior))
        return 1 if scores[1] > scores[0] else 0


def batch_lda_statistics(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """批量计算 LDA 的充分统计量 (各类样本数, 各类均值, 类内散度)"""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    d = X.shape[1]
    counts = np.zeros(2, dtype=np.int64)
    means = np.zeros((2, d))
    scatter = np.zeros((d, d))
    for c in (0, 1):
        members = X[y == c]
        counts[c] = members.shape[0]
        if counts[c]:
            means[c] = members.mean(axis=0)
            centered = members - means[c]
            scatter += centered.T @ centered
    return counts, means, scatter


class KNNClassifier:
    """保存全部历史样本的 k 近邻分类器

    第 t 个样本用前 t-1 个样本预测；历史不足 k 个时用全部历史，
    距离相同按存入先后取较早的样本，票数相同时取最近邻的标签。
    设置 max_history 后历史是环形缓冲区，满了就覆盖最早的样本。
    """

    def __init__(self, k: int = 3, max_history: Optional[int] = None):
        if k < 1:
            raise InputError(f"k 至少为 1，当前为 {k}")
        if max_history is not None and max_history < 1:
            raise InputError(f"max_history 必须为正，当前为 {max_history}")
        self.k = k
        self.max_history = max_history
        self.reset()

    def reset(self) -> None:
        self.dim: Optional[int] = None
        self._X = np.zeros((0, 0))
        self._y = np.zeros(0, dtype=np.int8)
        self._size = 0
        # 环形缓冲区中最早样本的位置，只有缓冲区满了才会不为 0
        self._start = 0

    @property
    def is_fitted(self) -> bool:
        return self._size > 0

    def __len__(self) -> int:
        return self._size

    def _capacity_limit(self, wanted: int) -> int:
        return wanted if self.max_history is None else min(wanted, self.max_history)

    def update(self, sample: LabeledSample) -> None:
        x = sample.features
        if self.dim is None:
            self.dim = x.shape[0]
            capacity = self._capacity_limit(64)
            self._X = np.zeros((capacity, self.dim))
            self._y = np.zeros(capacity, dtype=np.int8)
        elif x.shape != (self.dim,):
            raise InputError(f"特征维度不匹配: 期望 {self.dim}，收到 {x.shape}")

        if self.max_history is not None and self._size == self.max_history:
            self._X[self._start] = x
            self._y[self._start] = sample.label
            self._start = (self._start + 1) % self.max_history
            return
        if self._size == self._X.shape[0]:
            capacity = self._capacity_limit(2 * self._X.shape[0])
            grown_X = np.zeros((capacity, self.dim))
            grown_y = np.zeros(capacity, dtype=np.int8)
            grown_X[:self._size] = self._X
            grown_y[:self._size] = self._y
            self._X, self._y = grown_X, grown_y
        self._X[self._size] = x
        self._y[self._size] = sample.label
        self._size += 1

    def warm_start(self, samples: Iterable[LabeledSample]) -> None:
        for sample in samples:
            self.update(sample)

    def history(self) -> Tuple[np.ndarray, np.ndarray]:
        """按存入先后排列的 (特征, 标签)"""
        if self._start == 0:
            return self._X[:self._size], self._y[:self._size]
        order = np.r_[self._start:self._size, 0:self._start]
        return self._X[order], self._y[order]

    def predict(self, features: np.ndarray) -> int:
        if self._size == 0:
            raise UsageError("KNN 历史为空，无法预测")
        x = np.asarray(features, dtype=np.float64)
        if x.shape != (self.dim,):
            raise InputError(f"特征维度不匹配: 期望 {self.dim}，收到 {x.shape}")
        X, y = self.history()
        dist2 = np.sum((X - x) ** 2, axis=1)
        nearest = np.argsort(dist2, kind='stable')[:self.k]
        votes = y[nearest]
        ones = int(votes.sum())
        others = votes.shape[0] - ones
        if ones > others:
            return 1
        if ones < others:
            return 0
        return int(y[nearest[0]])


def make_classifier(kind: str, k: int = 3) -> Classifier:
    """按名字构造分类器: 'lda' 或 'knn'"""
    name = kind.lower()
    if name == 'lda':
        return StreamingLDA()
    if name == 'knn':
        return KNNClassifier(k=k)
    raise InputError(f"未知的分类器类型: {kind}")
