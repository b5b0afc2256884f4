import hashlib
import json

import pytest

from csv_handler import ResultWriter
from ise_lab import dispatch
from lab_errors import InvalidArgumentError
from processor import run_subcommand


def run(tmp_path, *argv):
    return dispatch(list(argv) + ['--out', str(tmp_path), '-q'])


def test_shapes_output_and_manifest(tmp_path):
    assert run(tmp_path, 'shapes', '--m', '6') == 0
    output = tmp_path / 'shapes_m6.json'
    document = json.loads(output.read_text())
    assert document['count'] == 105
    assert len(document['shapes']) == 105
    manifest = json.loads((tmp_path / 'shapes_m6.manifest.json').read_text())
    assert manifest['subcommand'] == 'shapes'
    assert manifest['output'] == 'shapes_m6.json'
    assert manifest['digest'] == hashlib.sha256(output.read_bytes()).hexdigest()
    assert manifest['flags']['m'] == 6


def test_reruns_are_byte_identical(tmp_path):
    for name in ('a', 'b'):
        assert run(tmp_path / name, 'perc', '--mode', 'mc', '--n', '2', '--p', '1/2', '--samples', '30', '--seed', '5') == 0
    for stem in ('perc_mc_d2_n2.csv', 'perc_mc_d2_n2_char.csv'):
        assert (tmp_path / 'a' / stem).read_bytes() == (tmp_path / 'b' / stem).read_bytes()


def test_empty_tree(tmp_path):
    assert run(tmp_path, 'trees', '--d', '2', '--n', '0') == 0
    df = ResultWriter.load_table(tmp_path / 'trees_one_point_n0.csv')
    assert df.loc[0, 't'] == '1'


def test_tree_tables(tmp_path):
    assert run(tmp_path, 'trees', '--d', '1', '--n', '1', '--m', '2', '--l', '1') == 0
    assert ResultWriter.load_table(tmp_path / 'trees_one_point_n1.csv').loc[0, 't'] == '2'
    tm = ResultWriter.load_table(tmp_path / 'trees_tm_m2_n1.csv')
    assert sorted(tm['count'].astype(int)) == [1, 1, 2]
    sue = ResultWriter.load_table(tmp_path / 'trees_sue_l1_n1.csv')
    assert sue.set_index('x')['ratio'].to_dict() == {'-1': '1/4', '0': '1/2', '1': '1/4'}
    report = json.loads((tmp_path / 'trees_overcount_l1_n1.json').read_text())
    assert report['holds'] and report['identity']


def test_genfun_document(tmp_path):
    assert run(tmp_path, 'genfun', '--m', '2', '--n-max', '3', '--s-max', '2', '--k2', '1/2') == 0
    document = json.loads((tmp_path / 'genfun_m2.json').read_text())
    assert document['k2'] == ['1/2']
    assert len(document['coefficients']) == 4 * 3
    assert document['z_coefficients'][0]['a'].count('/') == 1


def test_ise_transform_table(tmp_path):
    assert run(tmp_path, 'ise', '--m', '2', '--d', '1', '--k-grid', '0', '1') == 0
    df = ResultWriter.load_table(tmp_path / 'ise_transform_m2_d1.csv')
    assert df['k'].tolist() == ['0', '1']
    assert float(df.loc[0, 'value']) == pytest.approx(1.0, abs=1e-8)


def test_exact_cluster_table(tmp_path):
    assert run(tmp_path, 'perc', '--d', '2', '--n', '2', '--p', '1/3') == 0
    df = ResultWriter.load_table(tmp_path / 'perc_exact_d2_n2.csv')
    assert df['x'].tolist() == ['-1 0', '0 -1', '0 0', '0 1', '1 0']
    table = df.set_index('x')['probability'].to_dict()
    assert table['0 0'] == '256/2187'
    assert table['1 0'] == '64/2187'


def test_brw_table(tmp_path):
    assert run(tmp_path, 'brw', '--d', '1', '--n', '15', '--samples', '20', '--k-grid', '1', '2') == 0
    df = ResultWriter.load_table(tmp_path / 'brw_d1_n15.csv')
    assert df['k'].tolist() == ['1', '2']


def test_verify_passes(tmp_path):
    assert run(tmp_path, 'verify', '--suite', 'eq36', '--m', '2') == 0
    assert (tmp_path / 'verify_eq36.csv').exists()
    assert run(tmp_path, 'verify', '--suite', 'gw', 'appendix', 'shapes') == 0


def test_verify_failure_exit_code(tmp_path):
    assert run(tmp_path, 'verify', '--suite', 'eq37', '--n-list', '1600', '400') == 1


@pytest.mark.parametrize("argv,code", [
    (['shapes', '--bogus'], 2),
    (['verify', '--suite', 'nonsense'], 2),
    (['shapes', '--m', '11'], 2),
    (['shapes', '--m', '1'], 2),
    (['trees', '--d', '3', '--n', '9'], 4),
    (['ise', '--m', '2', '--d', '4', '--x-grid', '0,0,0,0'], 3),
    (['brw', '--n', '4'], 2),
    (['perc', '--p', 'abc'], 2),
    (['perc', '--p', '1/0'], 2),
    (['genfun', '--k2', 'x'], 2),
    (['genfun', '--m', '3', '--shape-index', '99'], 2),
    (['genfun', '--m', '4', '--shape-index', '-1'], 2),
    (['brw', '--p0', 'x'], 2),
    (['verify', '--suite', 'brw', '--p0', 'x'], 2),
])
def test_error_exit_codes(tmp_path, argv, code):
    assert run(tmp_path, *argv) == code


def test_missing_config_file(tmp_path):
    assert run(tmp_path, 'shapes', '--config', str(tmp_path / 'none.yaml')) == 2


def test_run_subcommand_reports_progress(tmp_path):
    events = []
    results = run_subcommand('verify', {'suite': ['gw']}, tmp_path, progress_callback=lambda e, d: events.append((e, d)))
    assert results.passed
    assert events == [('suite_complete', {'suite': 'gw', 'status': 'passed', 'failures': []})]
    with pytest.raises(InvalidArgumentError):
        run_subcommand('plot', {}, tmp_path)
