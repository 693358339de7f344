#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 命令行工具
子命令:
  calibrate  标定控制限查找表并做往返验证
  simulate   在伯努利误差流上测检测器的误报间隔与检测延迟
  bench      运行准确率表格对应的预设实验
  monitor    从标准输入逐行读取误差比特（0/1）并输出检测状态
  presets    列出内置预设
"""

import argparse
import configparser
import json
import logging
import os
import sys
from typing import Any, Dict, Iterable, Iterator, List, Optional, TextIO, Tuple

import numpy as np
import psutil

from ecdd_calibration import (
    DEFAULT_BASIS,
    DEFAULT_MAX_LEN_FACTOR,
    DEFAULT_MAX_RESIDUAL,
    DEFAULT_REPS,
    DEFAULT_VERIFY_REPS,
    CalibrationTable,
    default_grid,
    ensure_entries,
    fit_table,
    load_table,
    builtin_table,
    is_builtin,
    save_table,
    verify_entry,
)
from ecdd_detector import (
    DetectorState,
    DetectorStatus,
    detector_config_from,
    detector_new,
    detector_reset,
    detector_scan,
    detector_step,
)
from ecdd_harness import (
    PRESETS,
    build_preset,
    compare_reports,
    format_report_table,
    preset_requirements,
    report_to_json,
    run_experiment,
    simulate_run_lengths,
    write_window_trace,
)
from ecdd_settings import (
    EXIT_OK,
    EXIT_SEARCH,
    DataIOError,
    EcddError,
    InputError,
    StreamFormatError,
    exit_code_for,
    get_float_list,
    get_int_list,
    load_config,
    setup_logging,
)


logger = logging.getLogger('ecdd.cli')

MONITOR_BLOCK = 65536
VERIFY_TOLERANCE = 0.10
_BITS = {'0': 0, '1': 1}


def resolve_seed(seed: Optional[int]) -> int:
    """没有给种子时生成一个，并打印到 stderr 以便复现"""
    if seed is not None:
        if seed < 0:
            raise InputError(f"种子不能为负: {seed}")
        return seed
    generated = int(np.random.SeedSequence().entropy)
    print(f"seed={generated}", file=sys.stderr)
    logger.info(f"未指定种子，已生成 {generated}")
    return generated


def _pick(value: Any, fallback: Any) -> Any:
    return fallback if value is None else value


def calibration_settings(args: argparse.Namespace, config: configparser.ConfigParser) -> Dict[str, Any]:
    """[CALIBRATION] 配置节与命令行参数合并后的标定参数"""
    grid = default_grid(
        _pick(getattr(args, 'grid_start', None), config.getfloat('CALIBRATION', 'grid_start', fallback=0.01)),
        _pick(getattr(args, 'grid_stop', None), config.getfloat('CALIBRATION', 'grid_stop', fallback=0.50)),
        _pick(getattr(args, 'grid_step', None), config.getfloat('CALIBRATION', 'grid_step', fallback=0.01)),
    )
    return {
        'p0_grid': grid,
        'basis_powers': get_int_list(config, 'CALIBRATION', 'basis_powers', DEFAULT_BASIS),
        'reps': _pick(getattr(args, 'reps', None),
                      config.getint('CALIBRATION', 'reps', fallback=DEFAULT_REPS)),
        'tol_rel': config.getfloat('CALIBRATION', 'tol_rel', fallback=0.05),
        'max_residual': config.getfloat('CALIBRATION', 'max_residual', fallback=DEFAULT_MAX_RESIDUAL),
        'n_jobs': _pick(getattr(args, 'n_jobs', None), config.getint('CALIBRATION', 'n_jobs', fallback=1)),
    }


def table_path(args: argparse.Namespace, config: configparser.ConfigParser) -> str:
    return _pick(getattr(args, 'table', None), config.get('CALIBRATION', 'table_file', fallback=''))


def load_lookup_table(args: argparse.Namespace, config: configparser.ConfigParser) -> CalibrationTable:
    """以内置的 lambda=0.2 多项式为底，叠加查找表文件中的条目（同键以文件为准）

    命令行显式给出的文件必须存在；配置文件里的默认路径不存在时只用内置多项式。
    """
    table = builtin_table()
    explicit = getattr(args, 'table', None)
    path = table_path(args, config)
    if not path:
        return table
    if not os.path.exists(path) and explicit is None:
        logger.debug(f"查找表文件 {path} 尚不存在，使用内置多项式")
        return table
    for entry in load_table(path):
        table.add(entry, replace=True)
    logger.info(f"已加载查找表 {path}")
    return table


def warn_if_builtin(table: CalibrationTable, lam: float, arl0: float) -> None:
    """所用条目来自内置多项式时提示实际 ARL0 与名义值不符"""
    if table.covers(lam, arl0) and is_builtin(table.get(lam, arl0)):
        measured = table.get(lam, arl0).provenance.get('measured_arl0', {})
        logger.warning(
            f"lambda={lam:g}, ARL0={arl0:g} 使用内置多项式，实测 ARL0 与名义值不符 {measured}；"
            f"建议先运行 calibrate"
        )


def cmd_calibrate(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    """标定每个目标 ARL0 的控制限多项式，写出查找表并做往返验证"""
    lam = _pick(args.lam, config.getfloat('DETECTOR', 'lambda', fallback=0.2))
    arl0s = args.arl0 or get_float_list(config, 'CALIBRATION', 'arl0s', [100.0, 400.0, 1000.0])
    for arl0 in arl0s:
        if arl0 <= 1:
            raise InputError(f"目标 ARL0 必须大于 1，当前为 {arl0:g}")
    out = _pick(args.out, config.get('CALIBRATION', 'table_file', fallback='ecdd_table.json'))
    seed = resolve_seed(args.seed)
    settings = calibration_settings(args, config)
    max_len_factor = config.getfloat('CALIBRATION', 'max_len_factor', fallback=DEFAULT_MAX_LEN_FACTOR)

    table = CalibrationTable()
    for arl0 in arl0s:
        entry = fit_table(lam, arl0, seed=seed, max_len=int(max_len_factor * arl0), **settings)
        table.add(entry)
    save_table(table, out)
    print(f"✅ 查找表已写入 {out} ({len(table)} 个条目, seed={seed})")

    if args.no_verify:
        return EXIT_OK
    verify_p0 = get_float_list(config, 'CALIBRATION', 'verify_p0', [0.05, 0.1, 0.2, 0.3])
    verify_reps = _pick(args.verify_reps,
                        config.getint('CALIBRATION', 'verify_reps', fallback=DEFAULT_VERIFY_REPS))
    failures = 0
    for entry in table:
        rows = verify_entry(entry, verify_p0, reps=verify_reps, seed=seed,
                            n_jobs=settings['n_jobs'])
        for row in rows:
            ok = abs(row.rel_error) <= VERIFY_TOLERANCE
            failures += 0 if ok else 1
            mark = "✅" if ok else "❌"
            print(
                f"{mark} lambda={entry.lam:g} ARL0={entry.arl0:g} p0={row.p0:.3f} "
                f"L={row.limit:.4f} 模拟ARL0={row.estimate.mean:.1f} ({row.rel_error:+.1%})"
            )
    if failures:
        logger.warning(f"{failures} 个验证点超出 ±{VERIFY_TOLERANCE:.0%}")
        if args.strict or config.getboolean('CALIBRATION', 'strict_verify', fallback=False):
            print(f"❌ {failures} 个验证点超出 ±{VERIFY_TOLERANCE:.0%}", file=sys.stderr)
            return EXIT_SEARCH
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    """伯努利误差流上的首次报警时间实验，结果以 JSON 输出"""
    seed = resolve_seed(args.seed)
    detector_config = detector_config_from(
        config, lam=args.lam, target_arl0=args.arl0, min_observations=args.min_observations,
    )
    table = load_lookup_table(args, config)
    warn_if_builtin(table, detector_config.lam, detector_config.target_arl0)
    sample = simulate_run_lengths(
        p0=args.p0, p1=args.p1, change_point=args.change_point, length=args.length,
        config=detector_config, table=table, reps=args.reps, seed=seed,
    )
    summary = sample.summary()
    summary.update({
        'p0': args.p0,
        'p1': args.p1,
        'lambda': detector_config.lam,
        'target_arl0': detector_config.target_arl0,
        'min_observations': detector_config.min_observations,
        'seed': seed,
    })
    print(json.dumps(summary, indent=2, ensure_ascii=False))
    return EXIT_OK


def _selected_presets(args: argparse.Namespace) -> List[str]:
    if args.all:
        return [name for name in PRESETS if not name.startswith('elec')]
    if not args.presets:
        raise InputError("请指定至少一个预设名字，或使用 --all")
    for name in args.presets:
        if name not in PRESETS:
            raise InputError(f"未知的预设: {name}（用 presets 子命令查看全部）")
    return list(args.presets)


def cmd_bench(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    """运行预设实验并输出对齐表格；可选写出 JSON 报告、窗口轨迹和配对比较"""
    names = _selected_presets(args)
    seed = resolve_seed(_pick(args.seed, config.getint('EXPERIMENT', 'base_seed', fallback=None)))
    replications = _pick(args.replications, config.getint('EXPERIMENT', 'replications', fallback=100))
    n_jobs = _pick(args.n_jobs, config.getint('EXPERIMENT', 'n_jobs', fallback=1))
    auto_calibrate = config.getboolean('EXPERIMENT', 'auto_calibrate', fallback=True)
    electricity_path = _pick(args.data, config.get('STREAM', 'electricity_path', fallback=''))
    detector_defaults = detector_config_from(config)

    refit_builtin = config.getboolean('EXPERIMENT', 'refit_builtin', fallback=True)

    table = load_lookup_table(args, config)
    required = preset_requirements(names)
    missing = [
        (lam, arl0) for lam, arl0 in required
        if not table.covers(lam, arl0) or (refit_builtin and is_builtin(table.get(lam, arl0)))
    ]
    if missing and auto_calibrate:
        settings = calibration_settings(args, config)
        max_len_factor = config.getfloat('CALIBRATION', 'max_len_factor', fallback=DEFAULT_MAX_LEN_FACTOR)
        for lam, arl0 in missing:
            ensure_entries(table, [lam], [arl0], max_len_factor=max_len_factor,
                           replace_builtin=refit_builtin, seed=seed, **settings)
        path = table_path(args, config)
        if path:
            save_table(table, path)
    for lam, arl0 in required:
        warn_if_builtin(table, lam, arl0)

    window = args.window if args.trace_dir else None
    reports = []
    for name in names:
        spec = build_preset(
            name,
            replications=replications,
            base_seed=seed,
            electricity_path=electricity_path or None,
            min_observations=detector_defaults.min_observations,
            warning_buffer_cap=detector_defaults.warning_buffer_cap,
            window=window,
            keep_outcomes=args.compare,
        )
        report = run_experiment(spec, table=table, n_jobs=n_jobs)
        reports.append(report)
        if args.trace_dir and report.window_trace is not None:
            os.makedirs(args.trace_dir, exist_ok=True)
            write_window_trace(report.window_trace, os.path.join(args.trace_dir, f"{name}.csv"))

    expected = {name: PRESETS[name].expected for name in names}
    print(format_report_table(reports, expected), end="")

    if args.compare:
        for i in range(len(reports)):
            for j in range(i + 1, len(reports)):
                try:
                    result = compare_reports(reports[i], reports[j])
                except InputError as e:
                    logger.warning(f"跳过配对比较 {reports[i].name} vs {reports[j].name}: {e}")
                    continue
                print(
                    f"McNemar {result.name_a} vs {result.name_b}: b={result.b} c={result.c} "
                    f"chi2={result.statistic:.4f} p={result.p_value:.4g}"
                )

    if args.output:
        payload = {
            'seed': seed,
            'reports': [json.loads(report_to_json(r, {'expected': expected[r.name]})) for r in reports],
        }
        try:
            with open(args.output, 'w', encoding='utf-8') as f:
                json.dump(payload, f, indent=2, ensure_ascii=False)
                f.write("\n")
        except OSError as e:
            raise DataIOError(f"写入报告失败 {args.output}: {e}") from e
        logger.info(f"报告已写入 {args.output}")
    return EXIT_OK


def format_status_line(t: int, status: DetectorStatus, z: float, p_hat: float, limit: float) -> str:
    """状态行格式: t status z p_hat limit，实数保留6位有效数字"""
    return f"{t} {status.value} {z:.6g} {p_hat:.6g} {limit:.6g}"


def format_detection(t: int, run_length: int) -> str:
    return f"detection t={t} run_length={run_length}"


def parse_bits(lines: Iterable[str], first_row: int = 1) -> Iterator[Tuple[int, int]]:
    """逐行解析误差比特，空行跳过；返回 (行号, 比特)"""
    for row, line in enumerate(lines, start=first_row):
        token = line.strip()
        if not token:
            continue
        try:
            yield row, _BITS[token]
        except KeyError:
            raise StreamFormatError(f"误差比特必须是 0 或 1，收到 {token!r}", row=row) from None


def _read_blocks(source: TextIO, size: int) -> Iterator[List[str]]:
    block: List[str] = []
    for line in source:
        block.append(line)
        if len(block) >= size:
            yield block
            block = []
    if block:
        yield block


def monitor_stream(source: TextIO, out: TextIO, state: DetectorState,
                   auto_reset: bool = True, events_only: bool = False) -> Tuple[int, int]:
    """监控一个误差比特流，返回 (已处理比特数, 检测次数)

    auto_reset 为 False 时在第一次漂移后停止读取。
    """
    t = 0
    detections = 0
    if not events_only:
        for _, bit in parse_bits(source):
            t += 1
            state, status = detector_step(state, bit)
            out.write(format_status_line(t, status, state.z, state.p_hat, state.limit) + "\n")
            if status is DetectorStatus.DRIFT:
                detections += 1
                out.write(format_detection(t, state.t) + "\n")
                logger.info(f"检测到概念漂移: t={t}")
                if not auto_reset:
                    return t, detections
                state, _ = detector_reset(state)
        return t, detections

    row = 1
    for block in _read_blocks(source, MONITOR_BLOCK):
        bits = np.fromiter((bit for _, bit in parse_bits(block, first_row=row)), dtype=np.int8)
        row += len(block)
        offset = 0
        while offset < bits.shape[0]:
            result = detector_scan(state, bits[offset:])
            offset += result.consumed
            t += result.consumed
            if result.drift_index is None:
                continue
            detections += 1
            out.write(format_detection(t, state.t) + "\n")
            logger.info(f"检测到概念漂移: t={t}")
            if not auto_reset:
                return t, detections
            state, _ = detector_reset(state)
    return t, detections


def cmd_monitor(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    """从标准输入（或 --input 文件）读误差比特并逐行输出状态"""
    cap = config.getint('MONITOR', 'warning_buffer_cap', fallback=32)
    detector_config = detector_config_from(
        config, lam=args.lam, target_arl0=args.arl0, min_observations=args.min_observations,
        warning_buffer_cap=cap if cap > 0 else None,
    )
    table = load_lookup_table(args, config)
    warn_if_builtin(table, detector_config.lam, detector_config.target_arl0)
    state = detector_new(detector_config, table)
    auto_reset = config.getboolean('MONITOR', 'auto_reset', fallback=True)
    if args.no_reset:
        auto_reset = False
    events_only = args.events_only or config.getboolean('MONITOR', 'events_only', fallback=False)

    if args.input:
        try:
            source = open(args.input, 'r', encoding='utf-8')
        except OSError as e:
            raise DataIOError(f"无法打开输入文件 {args.input}: {e}") from e
    else:
        source = sys.stdin
    try:
        bits, detections = monitor_stream(source, sys.stdout, state,
                                          auto_reset=auto_reset, events_only=events_only)
    finally:
        if source is not sys.stdin:
            source.close()
        sys.stdout.flush()

    rss_mb = psutil.Process().memory_info().rss / 1024 / 1024
    logger.info(f"监控结束: {bits} 个比特, {detections} 次检测, 常驻内存 {rss_mb:.1f} MB")
    return EXIT_OK


def cmd_presets(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    """列出内置预设及其参考准确率"""
    width = max(len(name) for name in PRESETS)
    for name, preset in PRESETS.items():
        if args.filter and args.filter not in name:
            continue
        expected = f"{preset.expected:.2f}" if preset.expected is not None else "-"
        print(f"{name.ljust(width)}  {expected}")
    return EXIT_OK


def _add_detector_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--lambda', dest='lam', type=float, default=None,
                        help='EWMA 权重 lambda（默认取 [DETECTOR] lambda，0.2）')
    parser.add_argument('--arl0', type=float, default=None,
                        help='目标 ARL0（默认取 [DETECTOR] target_arl0，400）')
    parser.add_argument('--min-observations', type=int, default=None,
                        help='预热期长度（默认取 [DETECTOR] min_observations，30）')
    parser.add_argument('--table', default=None,
                        help='查找表 JSON 文件（默认取 [CALIBRATION] table_file，缺省用内置多项式）')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ecdd', description='ECDD 概念漂移检测工具')
    parser.add_argument('--config', default=None, help='配置文件路径（默认 config.ini）')
    parser.add_argument('--log-level', default=None, help='日志级别，覆盖 [LOGGING] log_level')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('calibrate', help='标定控制限查找表')
    p.add_argument('--lambda', dest='lam', type=float, default=None, help='EWMA 权重（默认 0.2）')
    p.add_argument('--arl0', type=float, nargs='+', default=None,
                   help='目标 ARL0 列表（默认取 [CALIBRATION] arl0s: 100,400,1000）')
    p.add_argument('--grid-start', type=float, default=None, help='p0 网格起点（默认 0.01）')
    p.add_argument('--grid-stop', type=float, default=None, help='p0 网格终点（默认 0.50）')
    p.add_argument('--grid-step', type=float, default=None, help='p0 网格步长（默认 0.01）')
    p.add_argument('--reps', type=int, default=None, help=f'每次 ARL0 估计的重复次数（默认 {DEFAULT_REPS}）')
    p.add_argument('--verify-reps', type=int, default=None,
                   help=f'往返验证的重复次数（默认 {DEFAULT_VERIFY_REPS}）')
    p.add_argument('--no-verify', action='store_true', help='跳过往返验证')
    p.add_argument('--strict', action='store_true', help='往返验证有超差点时以非零退出码结束')
    p.add_argument('--seed', type=int, default=None, help='随机种子（缺省自动生成并打印）')
    p.add_argument('--n-jobs', type=int, default=None, help='并行进程数（默认 1）')
    p.add_argument('--out', default=None, help='输出文件（默认取 [CALIBRATION] table_file）')
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser('simulate', help='伯努利误差流上的检测器实验')
    _add_detector_flags(p)
    p.add_argument('--p0', type=float, required=True, help='变化前的误差率')
    p.add_argument('--p1', type=float, default=None, help='变化后的误差率（缺省表示没有变化）')
    p.add_argument('--change-point', type=int, default=None, help='变化点 T（第 T+1 个比特起为 p1）')
    p.add_argument('--length', type=int, required=True, help='每条误差流的长度')
    p.add_argument('--reps', type=int, default=1000, help='重复次数（默认 1000）')
    p.add_argument('--seed', type=int, default=None, help='随机种子（缺省自动生成并打印）')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('bench', help='运行预设实验')
    p.add_argument('presets', nargs='*', help='预设名字，见 presets 子命令')
    p.add_argument('--all', action='store_true', help='运行全部合成数据预设')
    p.add_argument('--replications', type=int, default=None,
                   help='重复次数（默认取 [EXPERIMENT] replications，100）')
    p.add_argument('--seed', type=int, default=None, help='基础种子（缺省自动生成并打印）')
    p.add_argument('--n-jobs', type=int, default=None, help='并行进程数（默认 1）')
    p.add_argument('--table', default=None, help='查找表 JSON 文件')
    p.add_argument('--data', default=None, help='Electricity 数据文件（默认取 [STREAM] electricity_path）')
    p.add_argument('--output', default=None, help='把 JSON 报告写到该文件')
    p.add_argument('--trace-dir', default=None, help='把滑动窗口准确率轨迹写到该目录')
    p.add_argument('--window', type=int, default=100, help='滑动窗口大小（默认 100）')
    p.add_argument('--compare', action='store_true', help='对所选预设两两做 McNemar 检验')
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser('monitor', help='监控标准输入上的误差比特流')
    _add_detector_flags(p)
    p.add_argument('--input', default=None, help='从文件读取而不是标准输入')
    p.add_argument('--events-only', action='store_true', help='只输出检测记录（向量化，速度快）')
    p.add_argument('--no-reset', action='store_true', help='第一次漂移后停止，不自动重置')
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser('presets', help='列出内置预设')
    p.add_argument('--filter', default=None, help='只列出名字包含该子串的预设')
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        setup_logging(config, args.log_level)
        return args.func(args, config)
    except EcddError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return exit_code_for(e)
    except OSError as e:
        print(f"❌ {e}", file=sys.stderr)
        return exit_code_for(e)
    except KeyboardInterrupt:
        print("\n👋 已中断", file=sys.stderr)
        return exit_code_for(KeyboardInterrupt())


if __name__ == "__main__":
    sys.exit(main())
