#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 实验框架
按“先预测、再揭示真实标签、再更新”的顺序把数据流、分类器和检测器串起来，
支持多次重复、滑动窗口准确率轨迹、McNemar 配对比较，以及准确率表格对应的预设实验
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import chi2

from ecdd_calibration import CalibrationTable, builtin_table
from ecdd_classifiers import Classifier, make_classifier
from ecdd_detector import (
    DetectorConfig,
    DetectorStatus,
    ECDDDetector,
    detector_new,
    detector_scan,
)
from ecdd_settings import DataIOError, InputError, UsageError
from ecdd_streams import (
    GeneratorKind,
    StreamSpec,
    bernoulli_error_stream,
    electricity_spec,
    open_stream,
    with_seed,
)


logger = logging.getLogger('ecdd.harness')

DEFAULT_WINDOW = 100


class DetectorKind(str, Enum):
    """实验中使用的检测器"""

    NONE = "none"
    ECDD = "ecdd"
    ECDD_WT = "ecdd-wt"


@dataclass(frozen=True)
class ClassifierSpec:
    """基分类器：'lda' 或 'knn'（k 只对 knn 有意义）"""

    kind: str = "lda"
    k: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kind', self.kind.lower())
        if self.kind not in ('lda', 'knn'):
            raise InputError(f"未知的分类器类型: {self.kind}")
        if self.k < 1:
            raise InputError(f"k 至少为 1，当前为 {self.k}")

    def build(self) -> Classifier:
        return make_classifier(self.kind, k=self.k)

    @property
    def label(self) -> str:
        return self.kind.upper()


@dataclass(frozen=True)
class ExperimentSpec:
    """一次实验的完整描述；相同的 ExperimentSpec 得到相同的报告"""

    stream: StreamSpec
    classifier: ClassifierSpec = field(default_factory=ClassifierSpec)
    detector: DetectorKind = DetectorKind.NONE
    detector_config: Optional[DetectorConfig] = None
    replications: int = 1
    base_seed: int = 0
    window: Optional[int] = None
    keep_outcomes: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, 'detector', DetectorKind(self.detector))
        if self.replications < 1:
            raise InputError(f"replications 至少为 1，当前为 {self.replications}")
        if self.base_seed < 0:
            raise InputError(f"base_seed 不能为负，当前为 {self.base_seed}")
        if self.window is not None and self.window < 1:
            raise InputError(f"window 必须为正，当前为 {self.window}")
        if self.detector is not DetectorKind.NONE and self.detector_config is None:
            object.__setattr__(self, 'detector_config', DetectorConfig())

    @property
    def title(self) -> str:
        if self.name:
            return self.name
        parts = [self.stream.generator.value, self.classifier.kind, self.detector.value]
        return "-".join(parts)


@dataclass
class ReplicationResult:
    """单次重复的结果"""

    index: int
    seed: int
    accuracy: float
    detections: List[int]
    errors: np.ndarray


@dataclass
class ExperimentReport:
    """多次重复汇总后的实验报告

    std_error 是各次重复准确率的标准差（ddof=1），不是均值的标准误。
    """

    name: str
    mean_accuracy: float
    std_error: float
    per_replication_accuracy: List[float]
    detections: List[Tuple[int, int]]
    seeds: List[int]
    mean_detections: float
    window_trace: Optional[List[Tuple[int, float]]] = None
    outcomes: Optional[np.ndarray] = None

    @property
    def replications(self) -> int:
        return len(self.per_replication_accuracy)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'name': self.name,
            'replications': self.replications,
            'mean_accuracy': self.mean_accuracy,
            'std_error': self.std_error,
            'mean_detections': self.mean_detections,
            'per_replication_accuracy': list(self.per_replication_accuracy),
            'detections': [[rep, t] for rep, t in self.detections],
            'seeds': list(self.seeds),
        }
        if self.window_trace is not None:
            data['window_trace'] = [[t, acc] for t, acc in self.window_trace]
        return data


@dataclass(frozen=True)
class PairedComparison:
    """两个算法在相同数据流上的配对比较

    b: A 对 B 错的次数；c: A 错 B 对的次数。
    """

    name_a: str
    name_b: str
    b: int
    c: int
    statistic: float
    p_value: float


def replication_seed(base_seed: int, index: int) -> int:
    """由 (base_seed, 重复序号) 哈希出该次重复的种子"""
    if base_seed < 0 or index < 0:
        raise InputError(f"种子和序号不能为负: base_seed={base_seed}, index={index}")
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def run_replication(spec: ExperimentSpec, index: int,
                    table: Optional[CalibrationTable] = None) -> ReplicationResult:
    """运行一次重复

    每个观测：分类器预测（尚未训练时预测 0 类）、生成误差比特、用真实标签更新分类器、
    检测器处理误差比特。检测到漂移时记录时间，重置分类器（ECDD-WT 用预警缓冲区热启动）和检测器。
    """
    seed = replication_seed(spec.base_seed, index)
    stream = open_stream(with_seed(spec.stream, seed))
    classifier = spec.classifier.build()

    detector = None
    keep_payload = spec.detector is DetectorKind.ECDD_WT
    if spec.detector is not DetectorKind.NONE:
        detector = ECDDDetector(spec.detector_config, table if table is not None else builtin_table())

    errors = np.zeros(len(stream), dtype=np.int8)
    detections: List[int] = []
    for i, sample in enumerate(stream):
        predicted = classifier.predict(sample.features) if classifier.is_fitted else 0
        bit = int(predicted != sample.label)
        errors[i] = bit
        classifier.update(sample)
        if detector is None:
            continue
        status = detector.update(bit, sample if keep_payload else None)
        if status is DetectorStatus.DRIFT:
            detections.append(i + 1)
            drained = detector.reset()
            classifier.reset()
            if keep_payload:
                classifier.warm_start(drained)

    accuracy = 1.0 - float(errors.sum()) / errors.shape[0]
    return ReplicationResult(index=index, seed=seed, accuracy=accuracy,
                             detections=detections, errors=errors)


def _mean_trace(results: Sequence[ReplicationResult], w: int) -> List[Tuple[int, float]]:
    correct = np.mean([1.0 - r.errors for r in results], axis=0)
    return _window_means(correct, w)


def _window_means(correct: np.ndarray, w: int) -> List[Tuple[int, float]]:
    n = correct.shape[0]
    if w > n:
        raise InputError(f"窗口大小 {w} 大于数据流长度 {n}")
    sums = np.convolve(correct, np.ones(w), mode='valid')
    return [(t + 1, float(s / w)) for t, s in enumerate(sums)]


def window_accuracy(errors: Sequence[int], w: int = DEFAULT_WINDOW) -> List[Tuple[int, float]]:
    """t = 1..n-w+1 上前向窗口 [t, t+w-1] 的平均正确率"""
    bits = np.asarray(errors, dtype=np.float64)
    if bits.ndim != 1:
        raise InputError("误差比特必须是一维序列")
    if w < 1:
        raise InputError(f"窗口大小必须为正，当前为 {w}")
    return _window_means(1.0 - bits, w)


def run_experiment(spec: ExperimentSpec, table: Optional[CalibrationTable] = None,
                   n_jobs: int = 1) -> ExperimentReport:
    """运行全部重复并汇总；并行时结果仍按重复序号归并"""
    if spec.detector is not DetectorKind.NONE:
        table = table if table is not None else builtin_table()
        # 提前检查查找表是否覆盖，避免在工作进程里才失败
        detector_new(spec.detector_config, table)

    logger.info(f"开始实验 {spec.title}: {spec.replications} 次重复")
    indices = range(spec.replications)
    if n_jobs == 1 or spec.replications == 1:
        results = [run_replication(spec, i, table) for i in indices]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(run_replication)(spec, i, table) for i in indices)
    results.sort(key=lambda r: r.index)

    accuracies = [r.accuracy for r in results]
    mean_accuracy = float(np.mean(accuracies))
    std_error = float(np.std(accuracies, ddof=1)) if len(accuracies) > 1 else 0.0
    detections = [(r.index, t) for r in results for t in r.detections]

    window_trace = None
    if spec.window is not None:
        window_trace = _mean_trace(results, spec.window)

    outcomes = None
    if spec.keep_outcomes:
        outcomes = np.vstack([r.errors == 0 for r in results])

    report = ExperimentReport(
        name=spec.title,
        mean_accuracy=mean_accuracy,
        std_error=std_error,
        per_replication_accuracy=accuracies,
        detections=detections,
        seeds=[r.seed for r in results],
        mean_detections=len(detections) / len(results),
        window_trace=window_trace,
        outcomes=outcomes,
    )
    logger.info(
        f"实验 {spec.title} 完成: 平均准确率 {mean_accuracy:.4f} ({std_error:.4f}), "
        f"平均检测次数 {report.mean_detections:.2f}"
    )
    return report


def mcnemar(b: int, c: int) -> float:
    """带连续性校正的 McNemar 统计量 (|b-c|-1)^2 / (b+c)，b+c=0 时为 0"""
    if b < 0 or c < 0:
        raise InputError(f"不一致计数不能为负: b={b}, c={c}")
    if b + c == 0:
        return 0.0
    return (abs(b - c) - 1) ** 2 / (b + c)


def compare_reports(a: ExperimentReport, b: ExperimentReport) -> PairedComparison:
    """对两份在相同数据流上得到的报告做 McNemar 配对检验"""
    if a.outcomes is None or b.outcomes is None:
        raise UsageError("配对比较需要两份报告都保留逐点结果 (keep_outcomes=True)")
    if a.outcomes.shape != b.outcomes.shape:
        raise InputError(f"两份报告的结果形状不同: {a.outcomes.shape} vs {b.outcomes.shape}")
    if a.seeds != b.seeds:
        raise InputError("两份报告使用的种子不同，无法配对")
    only_a = int(np.count_nonzero(a.outcomes & ~b.outcomes))
    only_b = int(np.count_nonzero(~a.outcomes & b.outcomes))
    statistic = mcnemar(only_a, only_b)
    p_value = float(chi2.sf(statistic, 1)) if only_a + only_b else 1.0
    return PairedComparison(name_a=a.name, name_b=b.name, b=only_a, c=only_b,
                            statistic=statistic, p_value=p_value)


@dataclass
class RunLengthSample:
    """检测器在伯努利误差流上首次报警时间的样本；times 中 0 表示没有报警"""

    times: np.ndarray
    length: int
    change_point: Optional[int]
    seeds: List[int]

    @property
    def detected(self) -> np.ndarray:
        return self.times > 0

    @property
    def censored(self) -> int:
        return int(np.count_nonzero(~self.detected))

    @property
    def false_alarms(self) -> int:
        """变化点之前（或没有变化时任意时刻）的报警次数"""
        if self.change_point is None:
            return int(np.count_nonzero(self.detected))
        return int(np.count_nonzero(self.detected & (self.times <= self.change_point)))

    def delays(self) -> np.ndarray:
        """变化点之后首次报警相对变化点的延迟"""
        if self.change_point is None:
            return np.zeros(0, dtype=np.int64)
        hit = self.times > self.change_point
        return self.times[hit] - self.change_point

    def summary(self) -> Dict[str, Any]:
        detected = self.times[self.detected]
        delays = self.delays()
        return {
            'reps': int(self.times.shape[0]),
            'length': self.length,
            'change_point': self.change_point,
            'detected': int(detected.shape[0]),
            'censored': self.censored,
            'false_alarms': self.false_alarms,
            'mean_detection_time': float(detected.mean()) if detected.size else None,
            'median_detection_time': float(np.median(detected)) if detected.size else None,
            'median_delay': float(np.median(delays)) if delays.size else None,
        }


def simulate_run_lengths(p0: float, p1: Optional[float], change_point: Optional[int], length: int,
                         config: DetectorConfig, table: CalibrationTable, reps: int,
                         seed: int) -> RunLengthSample:
    """在伯努利误差流上运行自适应检测器，记录每次重复的首次报警时间"""
    if reps < 1:
        raise InputError(f"重复次数至少为 1: {reps}")
    times = np.zeros(reps, dtype=np.int64)
    seeds = []
    for i in range(reps):
        rep_seed = replication_seed(seed, i)
        seeds.append(rep_seed)
        bits = bernoulli_error_stream(p0, p1, change_point, length, rep_seed)
        state = detector_new(config, table)
        result = detector_scan(state, bits)
        if result.drift_index is not None:
            times[i] = result.drift_index + 1
    return RunLengthSample(times=times, length=length, change_point=change_point, seeds=seeds)


@dataclass(frozen=True)
class Preset:
    """准确率表格中的一个实验单元；expected 为已发表的参考平均准确率"""

    data: str
    classifier: str
    detector: DetectorKind
    arl0: Optional[float] = None
    lam: float = 0.2
    change_point: Optional[int] = None
    expected: Optional[float] = None
    sweep: bool = False

    @property
    def name(self) -> str:
        if self.data in ('gauss', 'sine'):
            head = f"{self.data}{self.change_point}"
        else:
            head = self.data
        name = f"{head}-{self.classifier}-{self.detector.value}"
        if self.arl0 is not None:
            name += f"-arl{self.arl0:g}"
        if self.sweep or self.lam != 0.2:
            name += f"-lambda{self.lam:g}"
        return name


_CLASSIFIER_ROWS = (
    ('lda', DetectorKind.ECDD),
    ('lda', DetectorKind.ECDD_WT),
    ('knn', DetectorKind.ECDD),
    ('knn', DetectorKind.ECDD_WT),
)
_COLUMNS = (('gauss', 50), ('gauss', 200), ('sine', 50), ('sine', 200))

# 各表按 (分类器, 检测器) 行、(数据, T) 列给出的平均准确率
_ACCURACY_ARL600 = (
    (0.59, 0.71, 0.77, 0.90),
    (0.60, 0.72, 0.78, 0.90),
    (0.61, 0.73, 0.79, 0.91),
    (0.62, 0.73, 0.79, 0.92),
)
_ACCURACY_ARL100 = (
    (0.63, 0.71, 0.79, 0.89),
    (0.64, 0.70, 0.80, 0.89),
    (0.65, 0.72, 0.80, 0.90),
    (0.66, 0.72, 0.81, 0.90),
)
_ACCURACY_NONE = {'lda': (0.51, 0.52, 0.50, 0.52), 'knn': (0.54, 0.57, 0.54, 0.62)}
_LAMBDA_SWEEP = {
    0.1: (0.59, 0.73, 0.78, 0.91),
    0.2: (0.60, 0.72, 0.78, 0.90),
    0.3: (0.60, 0.72, 0.78, 0.89),
}
_DRIFT_ACCURACY = {
    ('lda', DetectorKind.ECDD): (0.68, 0.86),
    ('lda', DetectorKind.ECDD_WT): (0.69, 0.86),
    ('knn', DetectorKind.ECDD): (0.69, 0.82),
    ('knn', DetectorKind.ECDD_WT): (0.69, 0.82),
}
_ELECTRICITY = {
    ('lda', None): 0.70,
    ('knn', None): 0.73,
    ('lda', 100.0): 0.86,
    ('knn', 100.0): 0.88,
    ('lda', 1000.0): 0.85,
    ('knn', 1000.0): 0.87,
}
ELECTRICITY_ARL0S = (100.0, 400.0, 1000.0)
DRIFT_ARL0 = 400.0
DRIFT_RAMP = (200, 300)


def _build_presets() -> Dict[str, Preset]:
    presets: List[Preset] = []
    for clf, values in _ACCURACY_NONE.items():
        for (data, T), expected in zip(_COLUMNS, values):
            presets.append(Preset(data, clf, DetectorKind.NONE, change_point=T, expected=expected))
    for arl0, table in ((600.0, _ACCURACY_ARL600), (100.0, _ACCURACY_ARL100)):
        for (clf, kind), values in zip(_CLASSIFIER_ROWS, table):
            for (data, T), expected in zip(_COLUMNS, values):
                presets.append(Preset(data, clf, kind, arl0=arl0, change_point=T, expected=expected))
    for lam, values in _LAMBDA_SWEEP.items():
        for (data, T), expected in zip(_COLUMNS, values):
            presets.append(Preset(data, 'lda', DetectorKind.ECDD, arl0=600.0, lam=lam,
                                  change_point=T, expected=expected, sweep=True))
    for (clf, kind), (gauss, sine) in _DRIFT_ACCURACY.items():
        presets.append(Preset('driftgauss', clf, kind, arl0=DRIFT_ARL0, expected=gauss))
        presets.append(Preset('driftsine', clf, kind, arl0=DRIFT_ARL0, expected=sine))
    for clf in ('lda', 'knn'):
        presets.append(Preset('elec', clf, DetectorKind.NONE, expected=_ELECTRICITY[(clf, None)]))
        for arl0 in ELECTRICITY_ARL0S:
            for kind in (DetectorKind.ECDD, DetectorKind.ECDD_WT):
                expected = _ELECTRICITY.get((clf, arl0)) if kind is DetectorKind.ECDD else None
                presets.append(Preset('elec', clf, kind, arl0=arl0, expected=expected))

    return {preset.name: preset for preset in presets}


PRESETS: Dict[str, Preset] = _build_presets()


def build_preset(name: str, replications: int = 1, base_seed: int = 0,
                 electricity_path: Optional[str] = None, min_observations: int = 30,
                 warning_buffer_cap: Optional[int] = None, window: Optional[int] = None,
                 keep_outcomes: bool = False) -> ExperimentSpec:
    """把预设名字展开成 ExperimentSpec"""
    if name not in PRESETS:
        raise InputError(f"未知的预设: {name}")
    preset = PRESETS[name]

    if preset.data in ('gauss', 'sine'):
        stream = StreamSpec(generator=GeneratorKind(preset.data), length=2 * preset.change_point,
                            change_point=preset.change_point)
    elif preset.data in ('driftgauss', 'driftsine'):
        generator = GeneratorKind.GAUSS if preset.data == 'driftgauss' else GeneratorKind.SINE
        stream = StreamSpec(generator=generator, length=2 * DRIFT_RAMP[0],
                            change_point=DRIFT_RAMP[0], drift_ramp=DRIFT_RAMP)
    else:
        if not electricity_path:
            raise DataIOError("Electricity 预设需要数据文件路径 ([STREAM] electricity_path)")
        stream = electricity_spec(electricity_path)
        replications = 1

    detector_config = None
    if preset.detector is not DetectorKind.NONE:
        detector_config = DetectorConfig(
            lam=preset.lam,
            target_arl0=preset.arl0,
            min_observations=min_observations,
            warning_buffer_cap=warning_buffer_cap,
        )
    return ExperimentSpec(
        stream=stream,
        classifier=ClassifierSpec(kind=preset.classifier),
        detector=preset.detector,
        detector_config=detector_config,
        replications=replications,
        base_seed=base_seed,
        window=window,
        keep_outcomes=keep_outcomes,
        name=name,
    )


def preset_requirements(names: Sequence[str]) -> List[Tuple[float, float]]:
    """列出一组预设需要的 (lambda, ARL0) 查找表条目"""
    needed = []
    for name in names:
        preset = PRESETS[name]
        if preset.detector is DetectorKind.NONE:
            continue
        key = (preset.lam, preset.arl0)
        if key not in needed:
            needed.append(key)
    return needed


def report_to_json(report: ExperimentReport, extra: Optional[Dict[str, Any]] = None) -> str:
    """报告的机器可读形式"""
    data = report.to_dict()
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def format_report_table(reports: Sequence[ExperimentReport],
                        expected: Optional[Dict[str, Optional[float]]] = None) -> str:
    """对齐的文本表格：名字、重复次数、平均准确率 (标准差)、平均检测次数、参考值"""
    expected = expected or {}
    header = ("实验", "重复", "准确率", "检测次数", "参考值")
    rows = []
    for r in reports:
        reference = expected.get(r.name)
        rows.append((
            r.name,
            str(r.replications),
            f"{r.mean_accuracy:.4f} ({r.std_error:.4f})",
            f"{r.mean_detections:.2f}",
            f"{reference:.2f}" if reference is not None else "-",
        ))
    widths = [max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def write_window_trace(trace: Sequence[Tuple[int, float]], path: str) -> None:
    """把滑动窗口准确率写成两列 CSV (t, accuracy)"""
    try:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write("t,accuracy\n")
            for t, acc in trace:
                f.write(f"{t},{acc:.6g}\n")
    except OSError as e:
        raise DataIOError(f"写入窗口轨迹失败 {path}: {e}") from e
    logger.info(f"窗口轨迹已写入 {path}: {len(trace)} 行")

