#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""数据流测试：合成生成器、标签翻转、CSV 读取"""

import math

import numpy as np
import pytest

from ecdd_settings import DataIOError, InputError, StreamFormatError
from ecdd_streams import (
    CsvSource,
    GeneratorKind,
    StreamSpec,
    bernoulli_error_stream,
    electricity_spec,
    gauss_stream,
    label_switch_probability,
    open_stream,
    sine_stream,
    stream_from_arrays,
    switch_probabilities,
    with_seed,
)


def write_csv(path, text):
    path.write_text(text, encoding='utf-8')
    return str(path)


class TestLabelSwitch:
    @pytest.mark.parametrize("t, q", [(1, 0.0), (200, 0.0), (201, 1.0), (400, 1.0)])
    def test_abrupt(self, t, q):
        assert label_switch_probability(t, change_point=200) == q

    @pytest.mark.parametrize("t, q", [(150, 0.0), (200, 0.0), (250, 0.5), (275, 0.75), (300, 1.0), (350, 1.0)])
    def test_ramp(self, t, q):
        assert label_switch_probability(t, change_point=200, drift_ramp=(200, 300)) == pytest.approx(q)

    def test_no_change(self):
        assert label_switch_probability(10 ** 6) == 0.0

    @pytest.mark.parametrize("kwargs", [{'change_point': 50}, {'drift_ramp': (20, 60)}, {}])
    def test_vector_matches_scalar(self, kwargs):
        q = switch_probabilities(100, **kwargs)
        expected = [label_switch_probability(t, **kwargs) for t in range(1, 101)]
        assert np.allclose(q, expected)


class TestStreamSpec:
    @pytest.mark.parametrize("kwargs", [
        {'generator': 'gauss'},
        {'generator': 'gauss', 'length': 0},
        {'generator': 'gauss', 'length': 100, 'change_point': 100},
        {'generator': 'gauss', 'length': 100, 'change_point': 0},
        {'generator': 'sine', 'length': 100, 'drift_ramp': (60, 60)},
        {'generator': 'csv'},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InputError):
            StreamSpec(**kwargs)

    def test_generator_from_string(self):
        assert StreamSpec(generator='sine', length=10).generator is GeneratorKind.SINE

    def test_with_seed(self):
        spec = StreamSpec(generator='gauss', length=10, change_point=5, seed=1)
        again = with_seed(spec, 2)
        assert again.seed == 2
        assert again.change_point == 5


class TestGauss:
    def test_deterministic(self):
        spec = StreamSpec(generator='gauss', length=400, change_point=200, seed=5)
        a, b = gauss_stream(spec), gauss_stream(spec)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        other = gauss_stream(with_seed(spec, 6))
        assert not np.array_equal(a.features, other.features)

    def test_moments(self):
        stream = gauss_stream(StreamSpec(generator='gauss', length=40000, seed=1))
        X, y = stream.features, stream.labels
        assert y.mean() == pytest.approx(0.5, abs=0.02)
        assert np.allclose(X[y == 0].mean(axis=0), [0.0, 0.0], atol=0.05)
        assert np.allclose(X[y == 1].mean(axis=0), [2.0, 0.0], atol=0.1)
        assert np.allclose(np.cov(X[y == 0].T), np.eye(2), atol=0.1)
        assert np.allclose(np.cov(X[y == 1].T), 4 * np.eye(2), atol=0.3)

    def test_labels_flip_after_change(self):
        stream = gauss_stream(StreamSpec(generator='gauss', length=40000, change_point=20000, seed=2))
        X, y = stream.features, stream.labels
        before, after = slice(0, 20000), slice(20000, 40000)
        assert np.allclose(X[before][y[before] == 1].mean(axis=0), [2.0, 0.0], atol=0.1)
        assert np.allclose(X[after][y[after] == 1].mean(axis=0), [0.0, 0.0], atol=0.1)

    def test_wrong_kind(self):
        with pytest.raises(InputError):
            gauss_stream(StreamSpec(generator='sine', length=10))


class TestSine:
    def test_prevalence(self):
        stream = sine_stream(StreamSpec(generator='sine', length=50000, seed=3))
        assert (stream.labels == 0).mean() == pytest.approx(1 - math.cos(1), abs=0.01)

    def test_rule_before_change(self):
        stream = sine_stream(StreamSpec(generator='sine', length=400, change_point=200, seed=4))
        x, y = stream.features[:, 0], stream.features[:, 1]
        base = np.where(y < np.sin(x), 0, 1)
        assert np.array_equal(stream.labels[:200], base[:200])
        assert np.array_equal(stream.labels[200:], 1 - base[200:])

    def test_gradual_drift(self):
        stream = sine_stream(StreamSpec(generator='sine', length=400, change_point=200,
                                        drift_ramp=(200, 300), seed=7))
        x, y = stream.features[:, 0], stream.features[:, 1]
        flipped = stream.labels != np.where(y < np.sin(x), 0, 1)
        assert not flipped[:200].any()
        assert flipped[299:].all()
        assert 0 < flipped[200:299].sum() < 99


class TestStreamSource:
    def test_iteration_and_reset(self):
        source = stream_from_arrays([[0.0], [1.0], [2.0]], [0, 1, 0])
        assert len(source) == 3
        assert [s.label for s in source] == [0, 1, 0]
        assert source.next() is None
        source.reset()
        first = source.next()
        assert first.label == 0
        assert source.position == 1

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            stream_from_arrays([[0.0], [1.0]], [0])

    def test_open_stream_dispatch(self):
        source = open_stream(StreamSpec(generator='sine', length=25, seed=0))
        assert len(source) == 25
        assert source.dim == 2


class TestCsv:
    def spec(self, path, **kwargs):
        csv = CsvSource(path=path, feature_columns=('x1', 'x2'), label_column='class', **kwargs)
        return StreamSpec(generator='csv', csv=csv)

    def test_reads_in_file_order(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x1,x2,class\n1.0,2.0,0\n3.5, -1,1\n0,0,1\n")
        source = open_stream(self.spec(path))
        assert len(source) == 3
        assert np.array_equal(source.features[1], [3.5, -1.0])
        assert list(source.labels) == [0, 1, 1]

    def test_length_limits_rows(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x1,x2,class\n1,2,0\n3,4,1\n5,6,1\n")
        csv = CsvSource(path=path, feature_columns=('x1', 'x2'), label_column='class')
        assert len(open_stream(StreamSpec(generator='csv', length=2, csv=csv))) == 2
        with pytest.raises(StreamFormatError):
            open_stream(StreamSpec(generator='csv', length=5, csv=csv))

    def test_bad_value_reports_row(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x1,x2,class\n1.0,2.0,0\noops,2.0,1\n")
        with pytest.raises(StreamFormatError) as info:
            open_stream(self.spec(path))
        assert info.value.row == 2
        assert "oops" in str(info.value)

    def test_bad_label(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x1,x2,class\n1.0,2.0,0\n1.0,2.0,0\n1.0,2.0,2\n")
        with pytest.raises(StreamFormatError) as info:
            open_stream(self.spec(path))
        assert info.value.row == 3

    def test_label_map(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x1,x2,class\n1,2,yes\n3,4,no\n")
        source = open_stream(self.spec(path, label_map={'YES': 1, 'NO': 0}))
        assert list(source.labels) == [1, 0]

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "x1,class\n1,0\n")
        with pytest.raises(InputError, match="x2"):
            open_stream(self.spec(path))

    def test_headerless_positions(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "1,2,0\n3,4,1\n")
        csv = CsvSource(path=path, feature_columns=(0, 1), label_column=2, has_header=False)
        source = open_stream(StreamSpec(generator='csv', csv=csv))
        assert np.array_equal(source.features, [[1.0, 2.0], [3.0, 4.0]])
        assert list(source.labels) == [0, 1]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            open_stream(self.spec(str(tmp_path / "none.csv")))

    def test_electricity_preset(self, tmp_path):
        path = write_csv(
            tmp_path / "elec.csv",
            "date,day,period,nswprice,nswdemand,vicprice,vicdemand,transfer,class\n"
            "0,2,0,0.056443,0.439155,0.003467,0.422915,0.414912,UP\n"
            "0,2,0.021277,0.051699,0.415055,0.003467,0.422915,0.414912,DOWN\n"
            "0,2,0.042553,0.051489,0.385004,0.003467,0.422915,0.414912,down\n",
        )
        source = open_stream(electricity_spec(path))
        assert len(source) == 3
        assert source.dim == 2
        assert np.allclose(source.features[0], [0.439155, 0.422915])
        assert list(source.labels) == [0, 1, 1]


class TestBernoulliErrors:
    def test_change(self):
        bits = bernoulli_error_stream(0.0, 1.0, 30, 50, seed=1)
        assert bits.dtype == np.int8
        assert not bits[:30].any()
        assert bits[30:].all()

    def test_rate_and_determinism(self):
        a = bernoulli_error_stream(0.2, None, None, 20000, seed=9)
        assert np.array_equal(a, bernoulli_error_stream(0.2, None, None, 20000, seed=9))
        assert a.mean() == pytest.approx(0.2, abs=0.015)

    def test_bad_rate(self):
        with pytest.raises(InputError):
            bernoulli_error_stream(1.5, None, None, 10, seed=0)
