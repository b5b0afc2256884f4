import hashlib
import json
from fractions import Fraction

import numpy as np
import pytest

from csv_handler import ResultWriter, format_rational, to_frame


def test_format_rational():
    assert format_rational(Fraction(-6, 4)) == "-3/2"
    assert format_rational(Fraction(5)) == "5/1"


def test_frame_splits_complex_columns():
    df = to_frame([{'k': '1', 'value': 1 + 2j}, {'k': '0', 'value': np.complex128(0.5)}])
    assert list(df.columns) == ['k', 'value_re', 'value_im']
    assert df['k'].tolist() == ['0', '1']
    assert df['value_im'].tolist() == [0.0, 2.0]


def test_frame_cells_are_plain():
    df = to_frame([{'x': (1, -2), 'p': Fraction(1, 3), 'n': np.int64(4)}])
    assert df.loc[0, 'x'] == '1 -2'
    assert df.loc[0, 'p'] == '1/3'
    assert df.loc[0, 'n'] == 4


def test_frame_sorts_on_key_columns_only():
    rows = [{'n': 2, 'err': 0.1}, {'n': 1, 'err': 0.3}, {'n': 1, 'err': 0.2}]
    df = to_frame(rows)
    assert df['n'].tolist() == [1, 1, 2]
    assert df['err'].tolist() == [0.3, 0.2, 0.1]
    assert to_frame(rows, sort_by=['err'])['err'].tolist() == [0.1, 0.2, 0.3]


def test_table_bytes_are_deterministic(tmp_path):
    rows = [{'n': 2, 'value': 0.1}, {'n': 1, 'value': 1 / 3}]
    first = ResultWriter(tmp_path / 'a').write_table('t', rows)
    second = ResultWriter(tmp_path / 'b').write_table('t', list(reversed(rows)))
    assert first.digest == second.digest
    payload = first.path.read_bytes()
    assert hashlib.sha256(payload).hexdigest() == first.digest
    assert payload.decode() == "n,value\n1,0.33333333333333331\n2,0.10000000000000001\n"
    assert first.rows == 2


def test_json_documents(tmp_path):
    writer = ResultWriter(tmp_path)
    written = writer.write_json('doc', {'b': Fraction(1, 2), 'a': np.arange(3), 'z': 1j})
    text = written.path.read_text()
    assert text.endswith('}\n')
    assert json.loads(text) == {'a': [0, 1, 2], 'b': '1/2', 'z': {'re': 0.0, 'im': 1.0}}
    assert text.index('"a"') < text.index('"b"')
    assert writer.written == [written]


def test_load_table_round_trip(tmp_path):
    written = ResultWriter(tmp_path).write_table('t', [{'x': '0 1', 'p': Fraction(2, 3)}])
    df = ResultWriter.load_table(written.path)
    assert df.to_dict('records') == [{'x': '0 1', 'p': '2/3'}]


def test_load_missing_table(tmp_path):
    with pytest.raises(FileNotFoundError):
        ResultWriter.load_table(tmp_path / 'missing.csv')
