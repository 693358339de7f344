#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""实验框架测试：预测-更新循环、重复实验、McNemar、预设"""

import json

import numpy as np
import pytest

from ecdd_detector import DetectorConfig
from ecdd_harness import (
    PRESETS,
    ClassifierSpec,
    DetectorKind,
    ExperimentReport,
    ExperimentSpec,
    RunLengthSample,
    build_preset,
    compare_reports,
    format_report_table,
    mcnemar,
    preset_requirements,
    replication_seed,
    report_to_json,
    run_experiment,
    run_replication,
    simulate_run_lengths,
    window_accuracy,
    write_window_trace,
)
from ecdd_settings import ConfigError, DataIOError, InputError, UsageError
from ecdd_streams import GeneratorKind, StreamSpec, open_stream, with_seed


def gauss_spec(length=400, change_point=200, **kwargs):
    stream = StreamSpec(generator=GeneratorKind.GAUSS, length=length, change_point=change_point)
    return ExperimentSpec(stream=stream, **kwargs)


def report_with(name, outcomes, seeds=(1,)):
    outcomes = np.asarray(outcomes, dtype=bool)
    return ExperimentReport(
        name=name, mean_accuracy=float(outcomes.mean()), std_error=0.0,
        per_replication_accuracy=list(outcomes.mean(axis=1)), detections=[],
        seeds=list(seeds), mean_detections=0.0, outcomes=outcomes,
    )


class TestMcNemar:
    @pytest.mark.parametrize("b, c, expected", [(10, 10, 0.05), (0, 0, 0.0), (30, 10, 9.025), (1, 0, 0.0)])
    def test_statistic(self, b, c, expected):
        assert mcnemar(b, c) == pytest.approx(expected)

    def test_negative(self):
        with pytest.raises(InputError):
            mcnemar(-1, 3)

    def test_compare_reports_counts(self):
        a = report_with("a", [[1, 1, 0, 0, 1]])
        b = report_with("b", [[1, 0, 1, 0, 0]])
        result = compare_reports(a, b)
        assert (result.b, result.c) == (2, 1)
        assert result.statistic == pytest.approx(0.0)
        assert result.p_value == pytest.approx(1.0)

    def test_identical_reports(self):
        a = report_with("a", [[1, 0, 1]])
        result = compare_reports(a, report_with("b", [[1, 0, 1]]))
        assert result.p_value == 1.0

    def test_requires_outcomes(self):
        a = report_with("a", [[1, 0]])
        b = report_with("b", [[1, 0]])
        b.outcomes = None
        with pytest.raises(UsageError):
            compare_reports(a, b)

    def test_mismatched_reports(self):
        a = report_with("a", [[1, 0]])
        with pytest.raises(InputError):
            compare_reports(a, report_with("b", [[1, 0, 1]]))
        with pytest.raises(InputError, match="种子"):
            compare_reports(a, report_with("b", [[1, 0]], seeds=(2,)))


class TestWindowAccuracy:
    def test_all_correct(self):
        trace = window_accuracy([0] * 200, 100)
        assert len(trace) == 101
        assert trace[0] == (1, 1.0)
        assert trace[-1] == (101, 1.0)

    def test_alternating(self):
        trace = window_accuracy([0, 1] * 100, 100)
        assert all(acc == pytest.approx(0.5) for _, acc in trace)

    def test_window_sees_change(self):
        trace = dict(window_accuracy([0] * 10 + [1] * 10, 5))
        assert trace[1] == 1.0
        assert trace[8] == pytest.approx(0.6)
        assert trace[16] == 0.0

    @pytest.mark.parametrize("w", [0, 201])
    def test_bad_window(self, w):
        with pytest.raises(InputError):
            window_accuracy([0] * 200, w)


class TestExperimentSpec:
    def test_detector_gets_default_config(self):
        spec = gauss_spec(detector='ecdd')
        assert spec.detector is DetectorKind.ECDD
        assert spec.detector_config == DetectorConfig()

    @pytest.mark.parametrize("kwargs", [{'replications': 0}, {'base_seed': -1}, {'window': 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(InputError):
            gauss_spec(**kwargs)

    def test_classifier_spec(self):
        assert ClassifierSpec('KNN').label == "KNN"
        with pytest.raises(InputError):
            ClassifierSpec('tree')

    def test_title(self):
        spec = gauss_spec(classifier=ClassifierSpec('knn'), detector=DetectorKind.ECDD_WT)
        assert spec.title == "gauss-knn-ecdd-wt"


class TestReplication:
    def test_seed_hash(self):
        assert replication_seed(0, 1) == replication_seed(0, 1)
        assert replication_seed(0, 1) != replication_seed(0, 2)
        assert replication_seed(1, 0) != replication_seed(0, 1)
        with pytest.raises(InputError):
            replication_seed(-1, 0)

    def test_accuracy_matches_errors(self, table):
        result = run_replication(gauss_spec(detector='ecdd'), 0, table)
        assert result.errors.shape == (400,)
        assert result.accuracy == pytest.approx(1.0 - result.errors.mean())

    def test_cold_start_predicts_class_zero(self):
        spec = gauss_spec(length=50, change_point=None)
        result = run_replication(spec, 3)
        stream = open_stream(with_seed(spec.stream, result.seed))
        assert result.errors[0] == stream.labels[0]

    def test_reproducible(self, table):
        spec = gauss_spec(detector='ecdd-wt', base_seed=11)
        a, b = run_replication(spec, 2, table), run_replication(spec, 2, table)
        assert np.array_equal(a.errors, b.errors)
        assert a.detections == b.detections

    def test_no_detector_never_detects(self):
        assert run_replication(gauss_spec(), 0).detections == []


class TestRunExperiment:
    def test_report_fields(self, table):
        spec = gauss_spec(length=100, change_point=50, detector='ecdd', replications=3,
                          window=50, keep_outcomes=True)
        report = run_experiment(spec, table)
        assert report.replications == 3
        assert report.mean_accuracy == pytest.approx(np.mean(report.per_replication_accuracy))
        assert report.std_error == pytest.approx(np.std(report.per_replication_accuracy, ddof=1))
        assert len(report.window_trace) == 51
        assert report.outcomes.shape == (3, 100)
        assert report.seeds == [replication_seed(0, i) for i in range(3)]
        assert report.mean_detections == len(report.detections) / 3

    def test_single_replication_has_zero_spread(self):
        report = run_experiment(gauss_spec(length=60, change_point=None))
        assert report.std_error == 0.0

    def test_parallel_matches_serial(self, table):
        spec = gauss_spec(length=120, change_point=60, detector='ecdd', replications=4, base_seed=5)
        serial = run_experiment(spec, table)
        parallel = run_experiment(spec, table, n_jobs=2)
        assert serial.to_dict() == parallel.to_dict()

    def test_uncovered_detector_fails_early(self, table):
        spec = gauss_spec(detector='ecdd', detector_config=DetectorConfig(target_arl0=123.0))
        with pytest.raises(ConfigError):
            run_experiment(spec, table)

    def test_detection_beats_static_classifier(self, table):
        config = DetectorConfig(target_arl0=100.0)
        static = run_experiment(gauss_spec(replications=20, base_seed=1))
        adaptive = run_experiment(
            gauss_spec(replications=20, base_seed=1, detector='ecdd', detector_config=config), table)
        assert adaptive.mean_accuracy > static.mean_accuracy + 0.08
        assert adaptive.mean_detections >= 1.0
        assert all(t > 0 for _, t in adaptive.detections)

    def test_paired_comparison_on_runs(self, table):
        kwargs = dict(replications=3, base_seed=2, keep_outcomes=True)
        static = run_experiment(gauss_spec(**kwargs))
        adaptive = run_experiment(gauss_spec(detector='ecdd', **kwargs), table)
        result = compare_reports(adaptive, static)
        assert result.b == int(np.count_nonzero(adaptive.outcomes & ~static.outcomes))
        assert result.c == int(np.count_nonzero(~adaptive.outcomes & static.outcomes))
        assert 0.0 <= result.p_value <= 1.0


class TestRunLengths:
    def test_sample_bookkeeping(self):
        sample = RunLengthSample(times=np.array([0, 150, 250]), length=400, change_point=200, seeds=[1, 2, 3])
        assert sample.censored == 1
        assert sample.false_alarms == 1
        assert list(sample.delays()) == [50]
        summary = sample.summary()
        assert summary['detected'] == 2
        assert summary['median_delay'] == 50.0

    def test_detects_error_rate_jump(self, table):
        config = DetectorConfig(target_arl0=400.0)
        sample = simulate_run_lengths(0.1, 0.6, 200, 400, config, table, reps=40, seed=3)
        assert sample.censored == 0
        delays = sample.delays()
        assert delays.size >= 15
        assert np.median(delays) < 30

    def test_stationary_false_alarms(self, table):
        sample = simulate_run_lengths(0.2, None, None, 300, DetectorConfig(), table, reps=10, seed=0)
        assert sample.false_alarms == int(np.count_nonzero(sample.detected))
        assert sample.delays().size == 0
        assert len(sample.seeds) == 10

    def test_deterministic(self, table):
        a = simulate_run_lengths(0.1, 0.4, 100, 300, DetectorConfig(), table, reps=5, seed=9)
        b = simulate_run_lengths(0.1, 0.4, 100, 300, DetectorConfig(), table, reps=5, seed=9)
        assert np.array_equal(a.times, b.times)


class TestPresets:
    @pytest.mark.parametrize("name, expected", [
        ('gauss50-lda-none', 0.51),
        ('sine200-knn-none', 0.62),
        ('gauss200-lda-ecdd-arl100', 0.71),
        ('sine200-knn-ecdd-wt-arl600', 0.92),
        ('gauss50-lda-ecdd-arl600-lambda0.1', 0.59),
        ('sine200-lda-ecdd-arl600-lambda0.2', 0.90),
        ('driftsine-knn-ecdd-arl400', 0.82),
        ('elec-lda-ecdd-arl100', 0.86),
        ('elec-knn-none', 0.73),
    ])
    def test_expected_values(self, name, expected):
        assert PRESETS[name].expected == expected

    def test_names_are_unique(self):
        assert len(PRESETS) == 74
        assert PRESETS['elec-lda-ecdd-wt-arl400'].expected is None

    def test_abrupt_stream(self):
        spec = build_preset('gauss200-lda-ecdd-arl100', replications=3, base_seed=4)
        assert spec.stream.length == 400
        assert spec.stream.change_point == 200
        assert spec.detector_config.target_arl0 == 100.0
        assert spec.replications == 3
        assert spec.name == 'gauss200-lda-ecdd-arl100'

    def test_drift_stream(self):
        spec = build_preset('driftgauss-knn-ecdd-wt-arl400', warning_buffer_cap=50)
        assert spec.stream.drift_ramp == (200, 300)
        assert spec.stream.length == 400
        assert spec.classifier.kind == 'knn'
        assert spec.detector_config.warning_buffer_cap == 50

    def test_lambda_preset(self):
        spec = build_preset('sine50-lda-ecdd-arl600-lambda0.3')
        assert spec.detector_config.lam == 0.3

    def test_electricity_needs_path(self):
        with pytest.raises(DataIOError):
            build_preset('elec-lda-none')
        spec = build_preset('elec-lda-none', replications=10, electricity_path="elec.csv")
        assert spec.replications == 1
        assert spec.stream.csv.path == "elec.csv"

    def test_unknown(self):
        with pytest.raises(InputError):
            build_preset('gauss100-lda-none')

    def test_requirements(self):
        names = ['gauss50-lda-none', 'gauss50-lda-ecdd-arl100', 'sine200-knn-ecdd-wt-arl100',
                 'gauss50-lda-ecdd-arl600-lambda0.1']
        assert preset_requirements(names) == [(0.2, 100.0), (0.1, 600.0)]


class TestReportWriters:
    def make_report(self):
        return ExperimentReport(
            name='gauss50-lda-none', mean_accuracy=0.5125, std_error=0.02,
            per_replication_accuracy=[0.5, 0.525], detections=[(1, 60)], seeds=[7, 8],
            mean_detections=0.5, window_trace=[(1, 0.5), (2, 0.25)],
        )

    def test_json(self):
        text = report_to_json(self.make_report(), {'seed': 7})
        assert text.endswith("\n")
        data = json.loads(text)
        assert data['seed'] == 7
        assert data['detections'] == [[1, 60]]
        assert data['window_trace'] == [[1, 0.5], [2, 0.25]]

    def test_table(self):
        other = self.make_report()
        other.name = 'custom'
        text = format_report_table([self.make_report(), other], {'gauss50-lda-none': 0.51})
        lines = text.splitlines()
        assert len(lines) == 4
        assert "0.5125 (0.0200)" in lines[2]
        assert lines[2].rstrip().endswith("0.51")
        assert lines[3].rstrip().endswith("-")

    def test_window_trace_file(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_window_trace([(1, 0.5), (2, 0.123456789)], str(path))
        assert path.read_text(encoding='utf-8') == "t,accuracy\n1,0.5\n2,0.123457\n"

    def test_window_trace_bad_path(self, tmp_path):
        with pytest.raises(DataIOError):
            write_window_trace([(1, 0.5)], str(tmp_path / "missing" / "trace.csv"))


@pytest.mark.slow
class TestReproduction:
    REPLICATIONS = 1000
    _reports = {}

    def accuracy(self, name, fitted_table):
        if name not in self._reports:
            spec = build_preset(name, replications=self.REPLICATIONS, base_seed=20240101)
            self._reports[name] = run_experiment(spec, fitted_table, n_jobs=2).mean_accuracy
        return self._reports[name]

    def test_stationary_run_length_near_target(self, table):
        config = DetectorConfig(target_arl0=400.0, min_observations=0)
        sample = simulate_run_lengths(0.1, None, None, 8000, config, table, reps=2000, seed=31)
        times = np.where(sample.detected, sample.times, sample.length)
        assert np.mean(times) == pytest.approx(400.0, rel=0.20)

    @pytest.mark.parametrize("name", [
        'gauss200-lda-ecdd-arl600', 'sine200-lda-ecdd-arl600', 'gauss200-lda-ecdd-wt-arl600',
        'sine200-knn-ecdd-arl600', 'gauss200-lda-none',
        'gauss50-lda-ecdd-arl100', 'sine50-lda-ecdd-arl100', 'gauss50-knn-ecdd-wt-arl100',
    ])
    def test_table_values(self, fitted_table, name):
        assert self.accuracy(name, fitted_table) == pytest.approx(PRESETS[name].expected, abs=0.02)

    @pytest.mark.parametrize("data", ['gauss50', 'sine50'])
    def test_lower_arl0_wins_on_short_segments(self, fitted_table, data):
        assert self.accuracy(f"{data}-lda-ecdd-arl100", fitted_table) > \
            self.accuracy(f"{data}-lda-ecdd-arl600", fitted_table)

    def test_higher_arl0_wins_on_long_segments(self, fitted_table):
        rows = ['lda-ecdd', 'lda-ecdd-wt', 'knn-ecdd', 'knn-ecdd-wt']
        arl600 = np.mean([self.accuracy(f"sine200-{row}-arl600", fitted_table) for row in rows])
        arl100 = np.mean([self.accuracy(f"sine200-{row}-arl100", fitted_table) for row in rows])
        assert arl600 > arl100

    @pytest.mark.parametrize("data, values", [('gauss200', (0.73, 0.72, 0.72)), ('sine200', (0.91, 0.90, 0.89))])
    def test_lambda_sensitivity(self, fitted_table, data, values):
        accuracies = [self.accuracy(f"{data}-lda-ecdd-arl600-lambda{lam:g}", fitted_table)
                      for lam in (0.1, 0.2, 0.3)]
        assert accuracies == pytest.approx(list(values), abs=0.02)
        assert max(accuracies) - min(accuracies) <= 0.03

    @pytest.mark.parametrize("name, expected", [('driftgauss-lda-ecdd-arl400', 0.68),
                                                ('driftsine-lda-ecdd-arl400', 0.86)])
    def test_gradual_drift(self, fitted_table, name, expected):
        assert self.accuracy(name, fitted_table) == pytest.approx(expected, abs=0.02)

    def test_warning_buffer_helps_on_gradual_drift(self, fitted_table):
        assert self.accuracy('driftgauss-lda-ecdd-wt-arl400', fitted_table) >= \
            self.accuracy('driftgauss-lda-ecdd-arl400', fitted_table)
