#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 公共设置模块
负责读取 config.ini、初始化日志，以及定义全项目共用的异常与退出码
"""

import configparser
import logging
import os
import sys
from typing import List, Optional


DEFAULT_CONFIG_FILE = "config.ini"

# 命令行退出码
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_SEARCH = 5


class EcddError(Exception):
    """ECDD 所有异常的基类"""


class ConfigError(EcddError):
    """配置非法或缺失"""


class InputError(EcddError, ValueError):
    """输入值不在定义域内"""


class UsageError(EcddError, RuntimeError):
    """调用顺序错误（例如漂移后未重置就继续使用）"""


class TableLookupError(EcddError, KeyError):
    """控制限查找表中没有对应的 (lambda, ARL0) 条目"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class SearchError(EcddError):
    """控制限搜索失败，携带最接近目标的结果供调用方决定是否使用"""

    def __init__(self, message: str, best_limit: Optional[float] = None,
                 best_arl: Optional[float] = None, history: Optional[list] = None):
        super().__init__(message)
        self.best_limit = best_limit
        self.best_arl = best_arl
        self.history = history or []


class FitError(EcddError):
    """多项式拟合失败"""


class StreamFormatError(InputError):
    """CSV 数据行格式错误，row 为从1开始的数据行号"""

    def __init__(self, message: str, row: int):
        super().__init__(f"第 {row} 行: {message}")
        self.row = row


class DataIOError(EcddError, OSError):
    """文件读写失败"""


def exit_code_for(exc: BaseException) -> int:
    """把异常映射为命令行退出码"""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataIOError, OSError)):
        return EXIT_IO
    if isinstance(exc, (StreamFormatError, InputError)):
        return EXIT_PARSE
    if isinstance(exc, (SearchError, FitError)):
        return EXIT_SEARCH
    if isinstance(exc, TableLookupError):
        return EXIT_CONFIG
    return EXIT_FAILURE


def load_config(config_file: Optional[str] = None) -> configparser.ConfigParser:
    """读取配置文件

    显式指定的文件不存在时报 ConfigError；默认的 config.ini 不存在时使用内置默认值。
    """
    config = configparser.ConfigParser()
    path = config_file or DEFAULT_CONFIG_FILE
    if not os.path.exists(path):
        if config_file is not None:
            raise ConfigError(f"配置文件不存在: {path}")
        return config
    try:
        config.read(path, encoding='utf-8')
    except configparser.Error as e:
        raise ConfigError(f"配置文件解析失败 {path}: {e}") from e
    return config


def get_float_list(config: configparser.ConfigParser, section: str, option: str,
                   fallback: List[float]) -> List[float]:
    """读取逗号分隔的实数列表"""
    raw = config.get(section, option, fallback=None)
    if raw is None or not raw.strip():
        return list(fallback)
    try:
        return [float(v.strip()) for v in raw.split(',') if v.strip()]
    except ValueError as e:
        raise ConfigError(f"[{section}] {option} 不是合法的实数列表: {raw}") from e


def get_int_list(config: configparser.ConfigParser, section: str, option: str,
                 fallback: List[int]) -> List[int]:
    """读取逗号分隔的整数列表"""
    raw = config.get(section, option, fallback=None)
    if raw is None or not raw.strip():
        return list(fallback)
    try:
        return [int(v.strip()) for v in raw.split(',') if v.strip()]
    except ValueError as e:
        raise ConfigError(f"[{section}] {option} 不是合法的整数列表: {raw}") from e


def setup_logging(config: Optional[configparser.ConfigParser] = None,
                  level: Optional[str] = None) -> logging.Logger:
    """设置日志记录

    控制台输出走 stderr，stdout 留给数据输出。重复调用不会重复添加 handler。
    """
    config = config or configparser.ConfigParser()
    log_level = level or config.get('LOGGING', 'log_level', fallback='INFO')
    log_file = config.get('LOGGING', 'log_file', fallback='')
    console_output = config.getboolean('LOGGING', 'console_output', fallback=True)

    logger = logging.getLogger('ecdd')
    try:
        logger.setLevel(getattr(logging, log_level.upper()))
    except AttributeError as e:
        raise ConfigError(f"未知的日志级别: {log_level}") from e

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    if console_output:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if not logger.handlers:
        logger.addHandler(logging.NullHandler())

    return logger
