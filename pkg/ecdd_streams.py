#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 数据流
合成基准 GAUSS / SINE（突变或线性渐变的标签翻转）以及按文件顺序读取的 CSV 数据（如 Electricity），
统一成逐个拉取 LabeledSample 的数据源
"""

import logging
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ecdd_classifiers import LabeledSample
from ecdd_settings import DataIOError, InputError, StreamFormatError


logger = logging.getLogger('ecdd.streams')

ELECTRICITY_FEATURES = ('nswdemand', 'vicdemand')
ELECTRICITY_LABEL = 'class'
# 价格相对24小时移动平均上涨为 0，持平或下跌为 1
ELECTRICITY_LABELS = {'UP': 0, 'DOWN': 1, '0': 0, '1': 1}

GAUSS_CLASS1_MEAN = np.array([2.0, 0.0])
GAUSS_CLASS1_SCALE = 2.0

Column = Union[str, int]


class GeneratorKind(str, Enum):
    """数据流类型"""

    GAUSS = "gauss"
    SINE = "sine"
    CSV = "csv"


@dataclass(frozen=True)
class CsvSource:
    """CSV 文件的读取方式；无表头时列用从0开始的位置表示"""

    path: str
    feature_columns: Tuple[Column, ...]
    label_column: Column
    has_header: bool = True
    label_map: Optional[Dict[str, int]] = None


@dataclass(frozen=True)
class StreamSpec:
    """数据流的声明式描述

    change_point 为 T 时，t <= T 的标签按变化前的规则给出，t > T 时翻转；
    drift_ramp=(start, end) 时翻转概率 q_t 在 [start, end] 上从 0 线性增加到 1。
    CSV 数据流的 length 为 None 时读取整个文件。
    """

    generator: GeneratorKind
    length: Optional[int] = None
    change_point: Optional[int] = None
    drift_ramp: Optional[Tuple[int, int]] = None
    seed: int = 0
    csv: Optional[CsvSource] = field(default=None, compare=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'generator', GeneratorKind(self.generator))
        synthetic = self.generator is not GeneratorKind.CSV
        if synthetic and self.length is None:
            raise InputError("合成数据流必须给出 length")
        if self.length is not None and self.length < 1:
            raise InputError(f"length 至少为 1，当前为 {self.length}")
        if self.change_point is not None:
            if self.change_point < 1:
                raise InputError(f"change_point 必须为正，当前为 {self.change_point}")
            if self.length is not None and self.change_point >= self.length:
                raise InputError(f"change_point ({self.change_point}) 必须小于 length ({self.length})")
        if self.drift_ramp is not None:
            start, end = self.drift_ramp
            if not start < end:
                raise InputError(f"drift_ramp 需要 start < end，当前为 {self.drift_ramp}")
            if not synthetic:
                raise InputError("drift_ramp 只适用于合成数据流")
            object.__setattr__(self, 'drift_ramp', (int(start), int(end)))
        if not synthetic and self.csv is None:
            raise InputError("CSV 数据流必须给出 csv 读取配置")


def label_switch_probability(t: int, change_point: Optional[int] = None,
                             drift_ramp: Optional[Tuple[int, int]] = None) -> float:
    """第 t 个样本（从1开始）的标签翻转概率 q_t"""
    if drift_ramp is not None:
        start, end = drift_ramp
        if t <= start:
            return 0.0
        if t >= end:
            return 1.0
        return (t - start) / (end - start)
    if change_point is not None and t > change_point:
        return 1.0
    return 0.0


def switch_probabilities(length: int, change_point: Optional[int] = None,
                         drift_ramp: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """t = 1..length 的 q_t 数组"""
    t = np.arange(1, length + 1, dtype=np.float64)
    if drift_ramp is not None:
        start, end = drift_ramp
        return np.clip((t - start) / (end - start), 0.0, 1.0)
    if change_point is not None:
        return (t > change_point).astype(np.float64)
    return np.zeros(length)


class StreamSource:
    """按顺序逐个给出样本的数据源，reset() 后可以原样重放"""

    def __init__(self, features: np.ndarray, labels: np.ndarray, name: str = "stream"):
        if features.shape[0] != labels.shape[0]:
            raise InputError(f"特征行数与标签数不一致: {features.shape[0]} vs {labels.shape[0]}")
        self.features = features
        self.labels = labels.astype(np.int8)
        self.name = name
        self._position = 0

    def next(self) -> Optional[LabeledSample]:
        """取下一个样本，结束时返回 None"""
        if self._position >= self.labels.shape[0]:
            return None
        i = self._position
        self._position += 1
        return LabeledSample(features=self.features[i], label=int(self.labels[i]))

    def reset(self) -> None:
        self._position = 0

    @property
    def position(self) -> int:
        return self._position

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __iter__(self) -> Iterator[LabeledSample]:
        while True:
            sample = self.next()
            if sample is None:
                return
            yield sample


def _apply_switch(rng: np.random.Generator, base_labels: np.ndarray, spec: StreamSpec) -> np.ndarray:
    q = switch_probabilities(spec.length, spec.change_point, spec.drift_ramp)
    flips = rng.random(spec.length) < q
    return np.where(flips, 1 - base_labels, base_labels)


def gauss_stream(spec: StreamSpec) -> StreamSource:
    """GAUSS: 类别各占一半，0 类 ~ N((0,0), I)，1 类 ~ N((2,0), 4I)，变化后标签翻转"""
    if spec.generator is not GeneratorKind.GAUSS:
        raise InputError(f"gauss_stream 需要 GAUSS 类型的 StreamSpec，收到 {spec.generator.value}")
    rng = np.random.default_rng(spec.seed)
    classes = rng.integers(0, 2, size=spec.length)
    noise = rng.standard_normal((spec.length, 2))
    features = np.where(classes[:, None] == 0, noise, GAUSS_CLASS1_MEAN + GAUSS_CLASS1_SCALE * noise)
    labels = _apply_switch(rng, classes, spec)
    return StreamSource(features, labels, name="gauss")


def sine_stream(spec: StreamSpec) -> StreamSource:
    """SINE: (x, y) ~ U[0,1]^2，y < sin(x) 为 0 类，其余（含恰在曲线上）为 1 类，变化后翻转"""
    if spec.generator is not GeneratorKind.SINE:
        raise InputError(f"sine_stream 需要 SINE 类型的 StreamSpec，收到 {spec.generator.value}")
    rng = np.random.default_rng(spec.seed)
    features = rng.random((spec.length, 2))
    base = np.where(features[:, 1] < np.sin(features[:, 0]), 0, 1)
    labels = _apply_switch(rng, base, spec)
    return StreamSource(features, labels, name="sine")


def _parser_error_row(message: str) -> int:
    match = re.search(r'line (\d+)', message)
    return int(match.group(1)) if match else 0


def _column(frame: pd.DataFrame, column: Column, path: str) -> pd.Series:
    key = column
    if isinstance(column, str) and column not in frame.columns and column.isdigit():
        key = int(column)
    if key not in frame.columns:
        raise InputError(f"{path} 中缺少列 {column!r}")
    return frame[key]


def csv_stream(spec: StreamSpec) -> StreamSource:
    """按文件顺序读取 CSV，任何一行格式错误都报错并给出数据行号（从1开始）"""
    if spec.generator is not GeneratorKind.CSV or spec.csv is None:
        raise InputError("csv_stream 需要 CSV 类型的 StreamSpec")
    source = spec.csv
    if not os.path.exists(source.path):
        raise DataIOError(f"数据文件不存在: {source.path}")
    try:
        frame = pd.read_csv(
            source.path,
            header=0 if source.has_header else None,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        raise StreamFormatError(f"CSV 解析失败: {e}", row=_parser_error_row(str(e))) from e
    except pd.errors.EmptyDataError as e:
        raise StreamFormatError("CSV 文件为空", row=0) from e
    except OSError as e:
        raise DataIOError(f"读取数据文件失败 {source.path}: {e}") from e

    if spec.length is not None:
        if len(frame) < spec.length:
            raise StreamFormatError(f"文件只有 {len(frame)} 行数据，少于要求的 {spec.length} 行",
                                    row=len(frame))
        frame = frame.iloc[:spec.length]

    columns = []
    for column in source.feature_columns:
        raw = _column(frame, column, source.path).str.strip()
        values = pd.to_numeric(raw, errors='coerce')
        bad = values.isna().to_numpy()
        if bad.any():
            i = int(np.argmax(bad))
            raise StreamFormatError(f"列 {column!r} 的值 {raw.iloc[i]!r} 不是实数", row=i + 1)
        columns.append(values.to_numpy(dtype=np.float64))
    features = np.column_stack(columns) if columns else np.zeros((len(frame), 0))

    raw_labels = _column(frame, source.label_column, source.path).str.strip()
    if source.label_map is not None:
        mapping = {str(k).upper(): v for k, v in source.label_map.items()}
        labels = raw_labels.str.upper().map(mapping)
    else:
        numeric = pd.to_numeric(raw_labels, errors='coerce')
        labels = numeric.where(numeric.isin([0, 1]))
    bad = labels.isna().to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise StreamFormatError(f"标签 {raw_labels.iloc[i]!r} 不是合法的二分类标签", row=i + 1)

    logger.info(f"已读取 {source.path}: {len(frame)} 个样本, {features.shape[1]} 个特征")
    return StreamSource(features, labels.to_numpy(dtype=np.int64), name=os.path.basename(source.path))


def open_stream(spec: StreamSpec) -> StreamSource:
    """根据 StreamSpec 的类型构造数据源"""
    if spec.generator is GeneratorKind.GAUSS:
        return gauss_stream(spec)
    if spec.generator is GeneratorKind.SINE:
        return sine_stream(spec)
    return csv_stream(spec)


def electricity_spec(path: str, length: Optional[int] = None) -> StreamSpec:
    """Electricity 数据集的预设：特征为 NSW 与 Vic 的用电需求，标签为价格走势"""
    return StreamSpec(
        generator=GeneratorKind.CSV,
        length=length,
        csv=CsvSource(
            path=path,
            feature_columns=ELECTRICITY_FEATURES,
            label_column=ELECTRICITY_LABEL,
            has_header=True,
            label_map=dict(ELECTRICITY_LABELS),
        ),
    )


def with_seed(spec: StreamSpec, seed: int) -> StreamSpec:
    """返回换了种子的同一个数据流描述"""
    return StreamSpec(
        generator=spec.generator,
        length=spec.length,
        change_point=spec.change_point,
        drift_ramp=spec.drift_ramp,
        seed=seed,
        csv=spec.csv,
    )


def bernoulli_error_stream(p0: float, p1: Optional[float], change_point: Optional[int],
                           length: int, seed: int) -> np.ndarray:
    """生成误差比特流：t <= change_point 时为 Bernoulli(p0)，之后为 Bernoulli(p1)"""
    for p in (p0, p1):
        if p is not None and not 0.0 <= p <= 1.0:
            raise InputError(f"误差率必须在 [0,1] 内，当前为 {p}")
    rng = np.random.default_rng(seed)
    rates = np.full(length, p0, dtype=np.float64)
    if change_point is not None and p1 is not None:
        rates[change_point:] = p1
    return (rng.random(length) < rates).astype(np.int8)


def stream_from_arrays(features: Sequence[Sequence[float]], labels: Sequence[int],
                       name: str = "arrays") -> StreamSource:
    """由内存中的数组构造数据源"""
    return StreamSource(np.asarray(features, dtype=np.float64), np.asarray(labels), name=name)
