#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 控制限标定模块
用蒙特卡洛方法估计已知 p0 的伯努利 EWMA 图的 ARL0，搜索达到目标 ARL0 的控制限 L，
再用多项式回归把 L 拟合成 p0 的函数，生成可以 O(1) 查询的控制限查找表
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ecdd_settings import (
    ConfigError,
    DataIOError,
    FitError,
    InputError,
    SearchError,
    TableLookupError,
)


logger = logging.getLogger('ecdd.calibration')

TABLE_VERSION = 1

DEFAULT_BASIS = [0, 1, 3, 5, 7]
FULL_BASIS = [0, 1, 2, 3, 4, 5, 6, 7]
DEFAULT_REPS = 10000
DEFAULT_VERIFY_REPS = 50000
DEFAULT_MAX_LEN_FACTOR = 100
DEFAULT_CHUNK_SIZE = 4096
LIMIT_MAX = 20.0
# 拟合残差上限（控制限的绝对误差）
DEFAULT_MAX_RESIDUAL = 1.0

# 每次生成的随机数时间块大小
_TIME_BLOCK = 256


@dataclass(frozen=True)
class RunLengthEstimate:
    """一次 ARL0 蒙特卡洛估计的结果"""

    mean: float
    std_error: float
    reps: int
    censored: int


@dataclass
class CalibrationEntry:
    """单个 (lambda, ARL0) 的控制限多项式 L(p0) = sum c_k * p0^k"""

    lam: float
    arl0: float
    basis_powers: List[int]
    coefficients: List[float]
    p0_min: float = 0.01
    p0_max: float = 0.99
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.basis_powers = [int(k) for k in self.basis_powers]
        self.coefficients = [float(c) for c in self.coefficients]
        if len(self.basis_powers) != len(self.coefficients):
            raise InputError(
                f"basis_powers 与 coefficients 长度不一致: "
                f"{len(self.basis_powers)} != {len(self.coefficients)}"
            )
        if not self.basis_powers:
            raise InputError("多项式至少需要一项")
        if not 0.0 <= self.p0_min < self.p0_max <= 1.0:
            raise InputError(f"p0 取值范围非法: [{self.p0_min}, {self.p0_max}]")
        self._terms: Tuple[Tuple[int, float], ...] = tuple(
            zip(self.basis_powers, self.coefficients)
        )

    @property
    def key(self) -> Tuple[float, float]:
        return _table_key(self.lam, self.arl0)

    def evaluate(self, p_hat: float) -> float:
        """在 p_hat 处求控制限，p_hat 先截断到 [p0_min, p0_max]"""
        if p_hat < self.p0_min:
            p_hat = self.p0_min
        elif p_hat > self.p0_max:
            p_hat = self.p0_max
        total = 0.0
        for power, coef in self._terms:
            total += coef * p_hat ** power
        return total

    def evaluate_many(self, p_hat: np.ndarray) -> np.ndarray:
        """向量化的 evaluate"""
        p = np.clip(np.asarray(p_hat, dtype=np.float64), self.p0_min, self.p0_max)
        total = np.zeros_like(p)
        for power, coef in self._terms:
            total += coef * p ** power
        return total

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda': self.lam,
            'arl0': self.arl0,
            'basis_powers': list(self.basis_powers),
            'coefficients': list(self.coefficients),
            'p0_min': self.p0_min,
            'p0_max': self.p0_max,
            'provenance': self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CalibrationEntry':
        try:
            return cls(
                lam=float(data['lambda']),
                arl0=float(data['arl0']),
                basis_powers=list(data['basis_powers']),
                coefficients=list(data['coefficients']),
                p0_min=float(data.get('p0_min', 0.01)),
                p0_max=float(data.get('p0_max', 0.99)),
                provenance=dict(data.get('provenance', {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"查找表条目格式错误: {e}") from e


def _table_key(lam: float, arl0: float) -> Tuple[float, float]:
    return (round(float(lam), 9), round(float(arl0), 6))


class CalibrationTable:
    """控制限查找表，每个 (lambda, ARL0) 至多一个条目"""

    def __init__(self, entries: Optional[Sequence[CalibrationEntry]] = None,
                 version: int = TABLE_VERSION):
        self.version = version
        self._entries: Dict[Tuple[float, float], CalibrationEntry] = {}
        for entry in entries or []:
            self.add(entry)

    def add(self, entry: CalibrationEntry, replace: bool = False) -> None:
        if entry.key in self._entries and not replace:
            raise InputError(f"查找表中已存在 lambda={entry.lam}, ARL0={entry.arl0} 的条目")
        self._entries[entry.key] = entry

    def get(self, lam: float, arl0: float) -> CalibrationEntry:
        try:
            return self._entries[_table_key(lam, arl0)]
        except KeyError:
            available = ", ".join(f"({k[0]}, {k[1]:g})" for k in sorted(self._entries))
            raise TableLookupError(
                f"查找表中没有 lambda={lam}, ARL0={arl0} 的条目 (已有: {available or '无'})"
            ) from None

    def covers(self, lam: float, arl0: float) -> bool:
        return _table_key(lam, arl0) in self._entries

    @property
    def entries(self) -> List[CalibrationEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[CalibrationEntry]:
        return iter(self.entries)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': self.version,
            'entries': [e.to_dict() for e in self.entries],
        }


# 已知 p0 的蒙特卡洛（每点 5000 次重复）测得的内置多项式实际 ARL0
BUILTIN_MEASURED_ARL0: Dict[float, Dict[str, float]] = {
    100.0: {'0.05': 73.0, '0.1': 52.0},
    400.0: {'min': 192.0, 'max': 293.0},
    1000.0: {'0.05': 19.4, '0.1': 42.3},
}


def builtin_table() -> CalibrationTable:
    """lambda=0.2 时发表的三条控制限多项式（原样作为数据）

    这些多项式在 p0 较大时变为负值（ARL0=100 约在 0.38，ARL0=1000 约在 0.47），
    所以求值范围限制在 [0.01, 0.30]。实测 ARL0 与名义值相差很大（见 BUILTIN_MEASURED_ARL0），
    ARL0=1000 的多项式在 p0<0.15 时甚至比 ARL0=100 的更敏感；需要准确的 ARL0 时应重新标定。
    """
    note = "printed polynomial; evaluation clamped to [0.01, 0.30] where it stays positive"
    rows = {
        100.0: [2.76, -6.23, 18.12, -312.45, 1002.18],
        400.0: [3.97, -6.56, 48.73, -330.13, 848.18],
        1000.0: [1.17, 7.56, -21.24, 112.12, -987.23],
    }
    entries = [
        CalibrationEntry(
            lam=0.2,
            arl0=arl0,
            basis_powers=list(DEFAULT_BASIS),
            coefficients=coefs,
            p0_min=0.01,
            p0_max=0.30,
            provenance={
                'source': 'builtin',
                'note': note,
                'measured_arl0': dict(BUILTIN_MEASURED_ARL0[arl0]),
            },
        )
        for arl0, coefs in rows.items()
    ]
    return CalibrationTable(entries)


def is_builtin(entry: CalibrationEntry) -> bool:
    """条目是否来自内置的发表多项式"""
    return entry.provenance.get('source') == 'builtin'


def eval_limit(table: CalibrationTable, lam: float, arl0: float, p_hat: float) -> float:
    """查表求控制限 L_t"""
    return table.get(lam, arl0).evaluate(p_hat)


def save_table(table: CalibrationTable, path: str) -> None:
    """把查找表写成 JSON 文本，相同内容总是得到相同字节"""
    text = json.dumps(table.to_dict(), indent=2, sort_keys=True)
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text + "\n")
    except OSError as e:
        raise DataIOError(f"写入查找表失败 {path}: {e}") from e
    logger.info(f"查找表已保存: {path} ({len(table)} 个条目)")


def load_table(path: str) -> CalibrationTable:
    """读取查找表文件"""
    if not os.path.exists(path):
        raise DataIOError(f"查找表文件不存在: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"查找表不是合法的 JSON {path}: {e}") from e
    except OSError as e:
        raise DataIOError(f"读取查找表失败 {path}: {e}") from e

    version = data.get('version') if isinstance(data, dict) else None
    if version != TABLE_VERSION:
        raise ConfigError(f"不支持的查找表版本: {version}")
    entries = [CalibrationEntry.from_dict(e) for e in data.get('entries', [])]
    try:
        table = CalibrationTable(entries, version=version)
    except InputError as e:
        raise ConfigError(f"查找表内容非法 {path}: {e}") from e
    logger.debug(f"已读取查找表 {path}: {len(table)} 个条目")
    return table


def _sigma_factor(lam: float, t: int) -> float:
    return math.sqrt(lam / (2.0 - lam) * (1.0 - (1.0 - lam) ** (2 * t)))


def _simulate_chunk(p0: float, lam: float, limit: float, n: int, max_len: int,
                    seed_seq: np.random.SeedSequence) -> Tuple[np.ndarray, np.ndarray]:
    """模拟 n 条独立同分布 Bernoulli(p0) 误差流，返回 (首次越限时间, 是否截尾)

    截尾的重复首次越限时间记为 max_len。

    每一步所有重复都抽一个随机数，无论是否已经停止，保证同一种子下不同控制限使用
    同一组随机数，估计的 ARL 对 L 严格单调。
    """
    rng = np.random.default_rng(seed_seq)
    z = np.zeros(n)
    run_length = np.full(n, max_len, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    sigma_x = math.sqrt(p0 * (1.0 - p0))
    keep = 1.0 - lam

    t = 0
    while t < max_len:
        block = min(_TIME_BLOCK, max_len - t)
        errors = (rng.random((block, n)) < p0).astype(np.float64)
        for i in range(block):
            t += 1
            z = keep * z + lam * errors[i]
            threshold = p0 + limit * _sigma_factor(lam, t) * sigma_x
            crossed = alive & (z > threshold)
            if crossed.any():
                run_length[crossed] = t
                alive &= ~crossed
                if not alive.any():
                    return run_length, alive
    return run_length, alive


def estimate_arl0(p0: float, lam: float, limit: float, reps: int = DEFAULT_REPS,
                  max_len: Optional[int] = None, seed: int = 0,
                  chunk_size: int = DEFAULT_CHUNK_SIZE, n_jobs: int = 1) -> RunLengthEstimate:
    """估计已知 p0 的 EWMA 图在控制限 limit 下的 ARL0

    Z_0 = 0，没有预热期；超过 max_len 仍未报警的重复按 max_len 计入并统计截尾数。
    分块的种子由 SeedSequence(seed).spawn 得到，串行与并行结果一致。
    """
    if not 0.0 < p0 < 1.0:
        raise InputError(f"p0 必须在 (0,1) 内，当前为 {p0}")
    if not 0.0 < lam < 1.0:
        raise InputError(f"lambda 必须在 (0,1) 内，当前为 {lam}")
    if limit < 0:
        raise InputError(f"控制限不能为负: {limit}")
    if reps < 1:
        raise InputError(f"重复次数至少为 1: {reps}")
    if max_len is None:
        max_len = 100000
    if max_len < 1:
        raise InputError(f"max_len 至少为 1: {max_len}")

    n_chunks = (reps + chunk_size - 1) // chunk_size
    sizes = [chunk_size] * (n_chunks - 1) + [reps - chunk_size * (n_chunks - 1)]
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)

    if n_jobs == 1 or n_chunks == 1:
        parts = [_simulate_chunk(p0, lam, limit, n, max_len, s) for n, s in zip(sizes, seeds)]
    else:
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_simulate_chunk)(p0, lam, limit, n, max_len, s)
            for n, s in zip(sizes, seeds)
        )

    lengths = np.concatenate([p[0] for p in parts]).astype(np.float64)
    mean = float(lengths.mean())
    std_error = float(lengths.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    censored = int(sum(np.count_nonzero(p[1]) for p in parts))
    return RunLengthEstimate(mean=mean, std_error=std_error, reps=reps, censored=censored)


@dataclass(frozen=True)
class LimitSearch:
    """一次控制限搜索的结果

    identified 为 False 表示 L=0 时 ARL0 已经落在容差内，ARL0 在 [0, L] 上是平的，
    任何足够小的 L 都满足目标，这样的 p0 不能用来回归 L(p0)。
    """

    p0: float
    limit: float
    arl: float
    identified: bool


def search_limit(p0: float, lam: float, target_arl0: float, reps: int = DEFAULT_REPS,
                 tol_rel: float = 0.05, seed: int = 0, max_len: Optional[int] = None,
                 limit_max: float = LIMIT_MAX, max_iter: int = 40, n_jobs: int = 1) -> LimitSearch:
    """搜索使 ARL0 落在 target*(1 ± tol_rel) 内的控制限

    先倍增扩展区间，再二分。每次评估都用同一个种子，估计值对 L 单调。
    """
    if target_arl0 <= 1:
        raise InputError(f"目标 ARL0 必须大于 1，当前为 {target_arl0}")
    if not 0.0 < tol_rel < 0.5:
        raise InputError(f"tol_rel 必须在 (0, 0.5) 内，当前为 {tol_rel}")
    if max_len is None:
        max_len = int(DEFAULT_MAX_LEN_FACTOR * target_arl0)

    lower_ok = target_arl0 * (1.0 - tol_rel)
    upper_ok = target_arl0 * (1.0 + tol_rel)
    history: List[Tuple[float, float]] = []

    def arl_at(limit: float) -> float:
        est = estimate_arl0(p0, lam, limit, reps=reps, max_len=max_len, seed=seed, n_jobs=n_jobs)
        history.append((limit, est.mean))
        logger.debug(f"p0={p0:.3f} L={limit:.5f} -> ARL0={est.mean:.2f} (截尾 {est.censored})")
        return est.mean

    def best() -> Tuple[float, float]:
        return min(history, key=lambda h: abs(h[1] - target_arl0))

    arl_zero = arl_at(0.0)
    if arl_zero > upper_ok:
        raise SearchError(
            f"p0={p0}, lambda={lam}: L->0 时 ARL0={arl_zero:.2f} 已超过目标 {target_arl0}",
            best_limit=None, best_arl=arl_zero, history=history,
        )
    if arl_zero >= lower_ok:
        logger.debug(f"p0={p0:.3f}: L=0 时 ARL0={arl_zero:.2f} 已在容差内，控制限不可辨识")
        return LimitSearch(p0=p0, limit=0.0, arl=arl_zero, identified=False)

    lo, hi = 0.0, 1.0
    arl_hi = arl_at(hi)
    while arl_hi < lower_ok:
        if hi >= limit_max:
            b_limit, b_arl = best()
            raise SearchError(
                f"p0={p0}, lambda={lam}: L={limit_max} 时 ARL0={arl_hi:.2f} 仍低于目标 {target_arl0}",
                best_limit=b_limit, best_arl=b_arl, history=history,
            )
        lo = hi
        hi = min(hi * 2.0, limit_max)
        arl_hi = arl_at(hi)
    if arl_hi <= upper_ok:
        return LimitSearch(p0=p0, limit=hi, arl=arl_hi, identified=True)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        arl_mid = arl_at(mid)
        if lower_ok <= arl_mid <= upper_ok:
            return LimitSearch(p0=p0, limit=mid, arl=arl_mid, identified=True)
        if arl_mid < lower_ok:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break

    b_limit, b_arl = best()
    raise SearchError(
        f"p0={p0}, lambda={lam}: 二分未能进入容差，最接近的 L={b_limit:.5f} 给出 ARL0={b_arl:.2f}",
        best_limit=b_limit, best_arl=b_arl, history=history,
    )


def find_limit(p0: float, lam: float, target_arl0: float, **kwargs: Any) -> float:
    """达到目标 ARL0 的控制限；L=0 已满足目标时返回 0"""
    return search_limit(p0, lam, target_arl0, **kwargs).limit


def default_grid(start: float = 0.01, stop: float = 0.50, step: float = 0.01) -> List[float]:
    """默认的 p0 网格"""
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def fit_polynomial(p0_grid: Sequence[float], limits: Sequence[float],
                   basis_powers: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """最小二乘拟合 limits ~ sum c_k p0^k，返回 (系数, 残差)"""
    grid = np.asarray(p0_grid, dtype=np.float64)
    y = np.asarray(limits, dtype=np.float64)
    powers = list(basis_powers)
    if grid.shape != y.shape:
        raise FitError(f"网格与控制限长度不一致: {grid.shape} vs {y.shape}")
    if len(np.unique(grid)) <= len(powers):
        raise FitError(
            f"不同的网格点数 ({len(np.unique(grid))}) 必须多于基函数个数 ({len(powers)})"
        )
    design = np.column_stack([grid ** k for k in powers])
    if np.linalg.matrix_rank(design) < len(powers):
        raise FitError("设计矩阵秩亏，无法拟合")
    coefficients, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ coefficients
    return coefficients, residuals


def fit_with_fallback(p0_grid: Sequence[float], limits: Sequence[float], basis_powers: Sequence[int],
                      max_residual: Optional[float] = DEFAULT_MAX_RESIDUAL
                      ) -> Tuple[List[int], np.ndarray, np.ndarray]:
    """按给定基函数拟合；最大残差超过 max_residual 时改用完整的 7 次基，仍然超过则报错"""
    powers = list(basis_powers)
    coefficients, residuals = fit_polynomial(p0_grid, limits, powers)
    worst = float(np.max(np.abs(residuals)))
    if max_residual is None or worst <= max_residual:
        return powers, coefficients, residuals

    if powers != FULL_BASIS and len(set(p0_grid)) > len(FULL_BASIS):
        logger.warning(f"基函数 {powers} 的最大残差 {worst:.4f} 超过 {max_residual}，改用完整的 7 次多项式")
        powers = list(FULL_BASIS)
        coefficients, residuals = fit_polynomial(p0_grid, limits, powers)
        worst = float(np.max(np.abs(residuals)))
        if worst <= max_residual:
            return powers, coefficients, residuals

    raise FitError(f"最大残差 {worst:.4f} 超过上限 {max_residual}")


def fit_table(lam: float, target_arl0: float, p0_grid: Optional[Sequence[float]] = None,
              basis_powers: Optional[Sequence[int]] = None, reps: int = DEFAULT_REPS,
              seed: int = 0, tol_rel: float = 0.05, max_len: Optional[int] = None,
              n_jobs: int = 1, max_residual: Optional[float] = DEFAULT_MAX_RESIDUAL) -> CalibrationEntry:
    """对网格上每个 p0 搜索控制限，再拟合多项式，得到一个查找表条目

    L=0 已满足目标的网格点不参与回归，条目的 p0_min 取参与回归的最小网格点。
    """
    grid = list(p0_grid) if p0_grid is not None else default_grid()
    powers = list(basis_powers) if basis_powers is not None else list(DEFAULT_BASIS)
    if not grid:
        raise FitError("p0 网格为空")
    if min(grid) < 0.01 or max(grid) > 0.99:
        raise InputError(f"p0 网格必须在 [0.01, 0.99] 内: [{min(grid)}, {max(grid)}]")
    if len(set(grid)) <= len(powers):
        raise FitError(
            f"不同的网格点数 ({len(set(grid))}) 必须多于基函数个数 ({len(powers)})"
        )

    logger.info(f"开始标定 lambda={lam}, ARL0={target_arl0}: {len(grid)} 个网格点, 每点 {reps} 次重复")
    used_grid: List[float] = []
    limits: List[float] = []
    excluded: List[float] = []
    for i, p0 in enumerate(grid):
        point_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        try:
            search = search_limit(p0, lam, target_arl0, reps=reps, tol_rel=tol_rel,
                                  seed=point_seed, max_len=max_len, n_jobs=n_jobs)
            limit = search.limit
        except SearchError as e:
            if e.best_limit is None:
                raise
            logger.warning(f"{e}；使用最接近的控制限 {e.best_limit:.5f}")
            limit = e.best_limit
        else:
            if not search.identified:
                excluded.append(float(p0))
                continue
        used_grid.append(float(p0))
        limits.append(limit)
        logger.debug(f"p0={p0:.3f}: L={limit:.5f}")

    if excluded:
        logger.warning(f"lambda={lam}, ARL0={target_arl0}: {len(excluded)} 个网格点的控制限不可辨识，不参与回归: {excluded}")
    if len(set(used_grid)) <= len(powers):
        raise FitError(
            f"可辨识的网格点 ({len(set(used_grid))}) 必须多于基函数个数 ({len(powers)})"
        )

    powers, coefficients, residuals = fit_with_fallback(used_grid, limits, powers, max_residual)
    entry_min, entry_max = min(used_grid), max(used_grid)
    check_points = np.linspace(entry_min, entry_max, 200)
    fitted = sum(c * check_points ** k for k, c in zip(powers, coefficients))
    if np.any(fitted <= 0):
        raise FitError(f"拟合的多项式在 [{entry_min}, {entry_max}] 内出现非正的控制限")

    max_abs_residual = float(np.max(np.abs(residuals)))
    logger.info(f"标定完成 lambda={lam}, ARL0={target_arl0}: 最大残差 {max_abs_residual:.4f}")
    return CalibrationEntry(
        lam=float(lam),
        arl0=float(target_arl0),
        basis_powers=powers,
        coefficients=[float(c) for c in coefficients],
        p0_min=entry_min,
        p0_max=entry_max,
        provenance={
            'source': 'fitted',
            'seed': int(seed),
            'reps': int(reps),
            'tol_rel': float(tol_rel),
            'grid': used_grid,
            'limits': [float(v) for v in limits],
            'excluded_p0': excluded,
            'max_abs_residual': max_abs_residual,
        },
    )


@dataclass(frozen=True)
class VerificationRow:
    """往返验证的一行：p0 处查表得到的 L 重新模拟出的 ARL0"""

    p0: float
    limit: float
    estimate: RunLengthEstimate
    rel_error: float


def verify_entry(entry: CalibrationEntry, p0_values: Sequence[float],
                 reps: int = DEFAULT_VERIFY_REPS, seed: int = 0,
                 max_len: Optional[int] = None, n_jobs: int = 1) -> List[VerificationRow]:
    """把拟合出的多项式代回已知 p0 的模拟，检查 ARL0 是否接近目标"""
    if max_len is None:
        max_len = int(DEFAULT_MAX_LEN_FACTOR * entry.arl0)
    rows = []
    for p0 in p0_values:
        limit = entry.evaluate(p0)
        est = estimate_arl0(p0, entry.lam, limit, reps=reps, max_len=max_len,
                            seed=seed, n_jobs=n_jobs)
        rel_error = (est.mean - entry.arl0) / entry.arl0
        rows.append(VerificationRow(p0=float(p0), limit=limit, estimate=est, rel_error=rel_error))
        logger.info(
            f"验证 lambda={entry.lam}, ARL0={entry.arl0:g}, p0={p0:.3f}: "
            f"L={limit:.4f}, 模拟 ARL0={est.mean:.1f} ({rel_error:+.1%})"
        )
    return rows


def ensure_entries(table: CalibrationTable, lambdas: Sequence[float], arl0s: Sequence[float],
                   max_len_factor: Optional[float] = None, replace_builtin: bool = False,
                   **fit_kwargs: Any) -> List[CalibrationEntry]:
    """为表中缺失的 (lambda, ARL0) 组合现场标定并加入表中

    replace_builtin 为真时，来自内置多项式的条目也重新标定并替换。
    """
    added = []
    for lam in lambdas:
        for arl0 in arl0s:
            if table.covers(lam, arl0):
                if not (replace_builtin and is_builtin(table.get(lam, arl0))):
                    continue
                logger.info(f"lambda={lam}, ARL0={arl0} 只有内置多项式，重新标定")
            else:
                logger.info(f"查找表缺少 lambda={lam}, ARL0={arl0}，开始现场标定")
            if max_len_factor is not None:
                fit_kwargs['max_len'] = int(max_len_factor * arl0)
            entry = fit_table(lam, arl0, **fit_kwargs)
            table.add(entry, replace=True)
            added.append(entry)
    return added
