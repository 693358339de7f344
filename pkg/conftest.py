#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""pytest 公共配置：--runslow 开关和共享 fixture"""

import configparser

import pytest

from ecdd_calibration import CalibrationTable, builtin_table, default_grid, fit_table


collect_ignore = ["examples"]


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="运行耗时的蒙特卡洛复现测试")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 耗时的蒙特卡洛测试，只在 --runslow 时运行")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def table():
    """lambda=0.2 的内置查找表"""
    return builtin_table()


# 复现测试用到的 (lambda, ARL0) 组合
REPRODUCTION_ENTRIES = [(0.2, 100.0), (0.2, 400.0), (0.2, 600.0), (0.1, 600.0), (0.3, 600.0)]


@pytest.fixture(scope="session")
def fitted_table():
    """在粗网格上现场标定的查找表，只给 --runslow 的复现测试用"""
    grid = default_grid(0.02, 0.50, 0.04)
    entries = [fit_table(lam, arl0, p0_grid=grid, reps=4000, seed=97, n_jobs=2)
               for lam, arl0 in REPRODUCTION_ENTRIES]
    return CalibrationTable(entries)


@pytest.fixture
def cli_config(tmp_path):
    """不写日志文件、不输出到控制台的配置文件"""
    config = configparser.ConfigParser()
    config['LOGGING'] = {'log_level': 'WARNING', 'log_file': '', 'console_output': 'false'}
    config['CALIBRATION'] = {'table_file': ''}
    config['EXPERIMENT'] = {'replications': '2', 'auto_calibrate': 'false'}
    path = tmp_path / "test_config.ini"
    with open(path, 'w', encoding='utf-8') as f:
        config.write(f)
    return str(path)


def periodic_bits(errors_every=10, length=200):
    """每 errors_every 个观测出现一次错误（在第 errors_every, 2*errors_every, ... 个）"""
    return [1 if t % errors_every == 0 else 0 for t in range(1, length + 1)]
