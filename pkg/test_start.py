#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""启动菜单测试"""

import pytest

import start


def feed(monkeypatch, *answers):
    replies = iter(answers)
    monkeypatch.setattr('builtins.input', lambda prompt="": next(replies))


def test_check_dependencies_reports_missing():
    missing = start.check_dependencies({'json': 'json', 'no_such_module_xyz': 'no-such-package'})
    assert missing == ['no-such-package']


def test_exit_option(monkeypatch, capsys):
    feed(monkeypatch, "7")
    assert start.main() == 0
    assert "再见" in capsys.readouterr().out


def test_invalid_option_then_exit(monkeypatch, capsys):
    feed(monkeypatch, "9", "7")
    assert start.main() == 0
    assert "无效选项" in capsys.readouterr().out


def test_end_of_input(monkeypatch):
    def closed(prompt=""):
        raise EOFError
    monkeypatch.setattr('builtins.input', closed)
    assert start.main() == 0


@pytest.mark.parametrize("choice, argv", [("4", ["presets"]), ("1", ["calibrate", "--arl0", "100", "400", "1000"])])
def test_menu_dispatch(monkeypatch, choice, argv):
    calls = []
    monkeypatch.setattr(start, 'check_dependencies', lambda packages=None: [])
    monkeypatch.setattr(start, 'run_cli', lambda args: calls.append(args) or 0)
    feed(monkeypatch, choice, "", "7")
    assert start.main() == 0
    assert calls == [argv]


def test_preset_prompt(monkeypatch):
    calls = []
    monkeypatch.setattr(start, 'run_cli', lambda args: calls.append(args) or 0)
    feed(monkeypatch, "sine50-knn-none", "5")
    start.run_preset()
    assert calls == [["bench", "sine50-knn-none", "--replications", "5"]]


def test_monitor_prompt_missing_file(monkeypatch, tmp_path):
    feed(monkeypatch, str(tmp_path / "bits.txt"))
    assert start.run_monitor() == 1
