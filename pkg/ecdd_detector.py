#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 概念漂移检测器
监控分类器的误差比特流（0=预测正确，1=预测错误），用伯努利 EWMA 图判断误差率是否上升。
每个观测的更新都是 O(1) 时间和内存（预警缓冲区除外）。
"""

import configparser
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Deque, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from ecdd_calibration import CalibrationEntry, CalibrationTable
from ecdd_settings import ConfigError, InputError, TableLookupError, UsageError


logger = logging.getLogger('ecdd.detector')

SNAPSHOT_VERSION = 1


class DetectorStatus(str, Enum):
    """检测器状态"""

    IN_CONTROL = "InControl"
    WARNING = "Warning"
    DRIFT = "Drift"


# detector_scan 输出的状态码 0/1/2 对应的状态
STATUS_BY_CODE = (DetectorStatus.IN_CONTROL, DetectorStatus.WARNING, DetectorStatus.DRIFT)


@dataclass(frozen=True)
class DetectorConfig:
    """检测器配置

    Attributes:
        lam: EWMA 权重 lambda，(0,1)。
        target_arl0: 两次误报之间的期望观测数，必须在查找表中有对应条目。
        warning_fraction: 预警阈值 W_t = warning_fraction * L_t，(0,1]。
        min_observations: 预热期，t 小于该值时不报漂移（预警仍可积累缓冲区）。
        warning_buffer_cap: 预警缓冲区上限，None 表示不限。
    """

    lam: float = 0.2
    target_arl0: float = 400.0
    warning_fraction: float = 0.5
    min_observations: int = 30
    warning_buffer_cap: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lambda 必须在 (0,1) 内，当前为 {self.lam}")
        if not 0.0 < self.warning_fraction <= 1.0:
            raise ConfigError(f"warning_fraction 必须在 (0,1] 内，当前为 {self.warning_fraction}")
        if self.target_arl0 <= 0:
            raise ConfigError(f"target_arl0 必须为正，当前为 {self.target_arl0}")
        if self.min_observations < 0:
            raise ConfigError(f"min_observations 不能为负，当前为 {self.min_observations}")
        if self.warning_buffer_cap is not None and self.warning_buffer_cap < 1:
            raise ConfigError(f"warning_buffer_cap 必须为正整数，当前为 {self.warning_buffer_cap}")


@dataclass
class DetectorState:
    """检测器的全部状态

    p_hat 由错误计数 errors / t 得到，与递推式 ((t-1) p + x) / t 相同，但没有累积舍入误差。
    """

    config: DetectorConfig
    entry: CalibrationEntry
    t: int = 0
    errors: int = 0
    z: float = 0.0
    p_hat: float = 0.0
    sigma_x: float = 0.0
    sigma_z: float = 0.0
    limit: float = 0.0
    warning_limit: float = 0.0
    status: DetectorStatus = DetectorStatus.IN_CONTROL
    warning_buffer: Deque[Any] = field(default_factory=deque)


@dataclass(frozen=True)
class ScanResult:
    """detector_scan 的输出：逐步轨迹与首个漂移位置"""

    consumed: int
    drift_index: Optional[int]
    status: np.ndarray
    z: np.ndarray
    p_hat: np.ndarray
    limit: np.ndarray


def ewma_sigma(p: float, lam: float, t: float) -> float:
    """伯努利 EWMA 估计量 Z_t 的标准差

    sqrt(p(1-p) * lambda/(2-lambda) * (1-(1-lambda)^{2t}))，t 可取 math.inf 得到渐近值。
    """
    if not 0.0 <= p <= 1.0:
        raise InputError(f"p 必须在 [0,1] 内，当前为 {p}")
    if not 0.0 < lam < 1.0:
        raise InputError(f"lambda 必须在 (0,1) 内，当前为 {lam}")
    if not t > 0:
        raise InputError(f"t 必须为正，当前为 {t}")
    if math.isinf(t):
        decay = 0.0
    else:
        decay = (1.0 - lam) ** (2 * t)
    return math.sqrt(p * (1.0 - p) * (lam / (2.0 - lam)) * (1.0 - decay))


def _new_buffer(config: DetectorConfig) -> Deque[Any]:
    return deque(maxlen=config.warning_buffer_cap)


def detector_new(config: DetectorConfig, table: CalibrationTable) -> DetectorState:
    """创建初始状态：t=0, Z_0=0, p_hat=0"""
    try:
        entry = table.get(config.lam, config.target_arl0)
    except TableLookupError as e:
        raise ConfigError(str(e)) from e
    return DetectorState(config=config, entry=entry, warning_buffer=_new_buffer(config))


def detector_step(state: DetectorState, error_bit: int,
                  payload: Any = None) -> Tuple[DetectorState, DetectorStatus]:
    """处理一个误差比特

    顺序：t 加一，更新 p_hat 与标准差，查表得 L_t，再更新 Z_t 并与阈值比较（严格大于）。
    状态原地更新并返回同一个对象。
    """
    if state.status is DetectorStatus.DRIFT:
        raise UsageError("检测器已报告漂移，必须先 detector_reset 再继续使用")
    if error_bit != 0 and error_bit != 1:
        raise InputError(f"误差比特必须是 0 或 1，收到 {error_bit!r}")

    config = state.config
    lam = config.lam
    t = state.t + 1
    state.t = t
    if error_bit:
        state.errors += 1
    p = state.errors / t
    state.p_hat = p

    sigma_x = math.sqrt(p * (1.0 - p))
    sigma_z = math.sqrt(lam / (2.0 - lam) * (1.0 - (1.0 - lam) ** (2 * t))) * sigma_x
    state.sigma_x = sigma_x
    state.sigma_z = sigma_z

    limit = state.entry.evaluate(p)
    warning_limit = config.warning_fraction * limit
    state.limit = limit
    state.warning_limit = warning_limit

    z = (1.0 - lam) * state.z + lam * error_bit
    state.z = z

    if z > p + limit * sigma_z and t >= config.min_observations:
        status = DetectorStatus.DRIFT
    elif z > p + warning_limit * sigma_z:
        status = DetectorStatus.WARNING
    else:
        status = DetectorStatus.IN_CONTROL
    state.status = status

    if status is DetectorStatus.IN_CONTROL:
        if state.warning_buffer:
            state.warning_buffer.clear()
    elif payload is not None:
        state.warning_buffer.append(payload)

    return state, status


def detector_reset(state: DetectorState) -> Tuple[DetectorState, List[Any]]:
    """重置检测器，返回全新状态和预警缓冲区中的观测（所有权交给调用方）"""
    drained = list(state.warning_buffer)
    fresh = DetectorState(config=state.config, entry=state.entry,
                          warning_buffer=_new_buffer(state.config))
    return fresh, drained


def detector_scan(state: DetectorState, bits: Sequence[int]) -> ScanResult:
    """向量化地连续处理一段误差比特，语义与逐个调用 detector_step（无 payload）一致

    遇到第一个漂移即停止，状态停在该观测上；consumed 为实际处理的比特数。
    """
    if state.status is DetectorStatus.DRIFT:
        raise UsageError("检测器已报告漂移，必须先 detector_reset 再继续使用")
    x = np.asarray(bits)
    if x.ndim != 1:
        raise InputError("误差比特必须是一维序列")
    n = x.shape[0]
    if n == 0:
        empty = np.zeros(0)
        return ScanResult(0, None, np.zeros(0, dtype=np.int8), empty, empty, empty)
    if not np.all((x == 0) | (x == 1)):
        bad = int(np.argmax(~((x == 0) | (x == 1))))
        raise InputError(f"误差比特必须是 0 或 1，第 {bad} 个为 {x[bad]!r}")

    config = state.config
    lam = config.lam
    keep = 1.0 - lam
    xf = x.astype(np.float64)

    t = state.t + np.arange(1, n + 1, dtype=np.int64)
    errors = state.errors + np.cumsum(x.astype(np.int64))
    p = errors / t
    sigma_z = np.sqrt(lam / (2.0 - lam) * (1.0 - keep ** (2 * t))) * np.sqrt(p * (1.0 - p))
    limit = state.entry.evaluate_many(p)
    warning_limit = config.warning_fraction * limit
    z, _ = lfilter([lam], [1.0, -keep], xf, zi=[keep * state.z])

    drift = (z > p + limit * sigma_z) & (t >= config.min_observations)
    warning = z > p + warning_limit * sigma_z
    codes = np.where(drift, 2, np.where(warning, 1, 0)).astype(np.int8)

    drift_index = int(np.argmax(drift)) if drift.any() else None
    consumed = n if drift_index is None else drift_index + 1
    last = consumed - 1

    if np.any(codes[:consumed] == 0):
        state.warning_buffer.clear()
    state.t = int(t[last])
    state.errors = int(errors[last])
    state.p_hat = float(p[last])
    state.sigma_x = math.sqrt(state.p_hat * (1.0 - state.p_hat))
    state.sigma_z = float(sigma_z[last])
    state.limit = float(limit[last])
    state.warning_limit = float(warning_limit[last])
    state.z = float(z[last])
    state.status = STATUS_BY_CODE[int(codes[last])]

    return ScanResult(
        consumed=consumed,
        drift_index=drift_index,
        status=codes[:consumed],
        z=z[:consumed],
        p_hat=p[:consumed],
        limit=limit[:consumed],
    )


def snapshot_state(state: DetectorState,
                   encode_payload: Optional[Callable[[Any], Any]] = None) -> str:
    """把状态序列化为 JSON 文本，用于断点保存"""
    encode = encode_payload or (lambda item: item)
    data = {
        'version': SNAPSHOT_VERSION,
        'config': {
            'lambda': state.config.lam,
            'target_arl0': state.config.target_arl0,
            'warning_fraction': state.config.warning_fraction,
            'min_observations': state.config.min_observations,
            'warning_buffer_cap': state.config.warning_buffer_cap,
        },
        'entry': state.entry.to_dict(),
        't': state.t,
        'errors': state.errors,
        'z': state.z,
        'p_hat': state.p_hat,
        'sigma_x': state.sigma_x,
        'sigma_z': state.sigma_z,
        'limit': state.limit,
        'warning_limit': state.warning_limit,
        'status': state.status.value,
        'warning_buffer': [encode(item) for item in state.warning_buffer],
    }
    try:
        return json.dumps(data, sort_keys=True)
    except TypeError as e:
        raise InputError(f"预警缓冲区中的观测无法序列化，请提供 encode_payload: {e}") from e


def restore_state(text: str,
                  decode_payload: Optional[Callable[[Any], Any]] = None) -> DetectorState:
    """从 snapshot_state 生成的文本恢复状态"""
    decode = decode_payload or (lambda item: item)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"快照不是合法的 JSON: {e}") from e
    if data.get('version') != SNAPSHOT_VERSION:
        raise InputError(f"不支持的快照版本: {data.get('version')}")
    cfg = data['config']
    config = DetectorConfig(
        lam=cfg['lambda'],
        target_arl0=cfg['target_arl0'],
        warning_fraction=cfg['warning_fraction'],
        min_observations=cfg['min_observations'],
        warning_buffer_cap=cfg['warning_buffer_cap'],
    )
    buffer = _new_buffer(config)
    buffer.extend(decode(item) for item in data['warning_buffer'])
    return DetectorState(
        config=config,
        entry=CalibrationEntry.from_dict(data['entry']),
        t=int(data['t']),
        errors=int(data['errors']),
        z=float(data['z']),
        p_hat=float(data['p_hat']),
        sigma_x=float(data['sigma_x']),
        sigma_z=float(data['sigma_z']),
        limit=float(data['limit']),
        warning_limit=float(data['warning_limit']),
        status=DetectorStatus(data['status']),
        warning_buffer=buffer,
    )


def detector_config_from(config: configparser.ConfigParser, **overrides: Any) -> DetectorConfig:
    """从 [DETECTOR] 配置节构造 DetectorConfig，overrides 中非 None 的值优先"""
    cap = config.getint('DETECTOR', 'warning_buffer_cap', fallback=0)
    values = {
        'lam': config.getfloat('DETECTOR', 'lambda', fallback=0.2),
        'target_arl0': config.getfloat('DETECTOR', 'target_arl0', fallback=400.0),
        'warning_fraction': config.getfloat('DETECTOR', 'warning_fraction', fallback=0.5),
        'min_observations': config.getint('DETECTOR', 'min_observations', fallback=30),
        'warning_buffer_cap': cap if cap > 0 else None,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    return DetectorConfig(**values)


class ECDDDetector:
    """把配置、查找表和状态绑在一起的便捷封装"""

    def __init__(self, config: DetectorConfig, table: CalibrationTable):
        self.config = config
        self.table = table
        self.state = detector_new(config, table)
        self.detections = 0

    def update(self, error_bit: int, payload: Any = None) -> DetectorStatus:
        """处理一个误差比特并返回状态"""
        _, status = detector_step(self.state, error_bit, payload)
        if status is DetectorStatus.DRIFT:
            self.detections += 1
            logger.debug(
                f"检测到概念漂移: t={self.state.t}, z={self.state.z:.4f}, "
                f"p_hat={self.state.p_hat:.4f}, L={self.state.limit:.4f}"
            )
        return status

    def reset(self) -> List[Any]:
        """重置并返回预警缓冲区的内容"""
        self.state, drained = detector_reset(self.state)
        return drained

    @property
    def status(self) -> DetectorStatus:
        return self.state.status

    @property
    def drift_detected(self) -> bool:
        return self.state.status is DetectorStatus.DRIFT

    @property
    def limit(self) -> float:
        return self.state.limit
