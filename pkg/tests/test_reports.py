import pytest

from core.functionals import ExtremalReport, GateauxRow
from core.variation_engine import VariationRow
from tools.reports import (
    CONVERGENCE_COLUMNS, GATEAUX_COLUMNS, RUN_LOG_COLUMNS, error_ratios, read_csv,
    write_convergence_table, write_gateaux_table, write_run_log,
)

ROWS = [
    VariationRow(0.2, 2 + 0j, -0.1 + 0.01j, -0.11 + 0.0j, -0.1003 + 0.0101j),
    VariationRow(0.2, -1 + 1j, 0.3j, 0.31j, None),
    VariationRow(0.1, 2 + 0j, -0.105 + 0.01j, -0.11 + 0.0j, -0.1003 + 0.0101j),
    VariationRow(0.1, -1 + 1j, 0.305j, 0.31j, None),
]


def test_convergence_table(tmp_path):
    path = write_convergence_table(tmp_path / "convergence.csv", ROWS)
    records = read_csv(path)
    assert tuple(records[0]) == CONVERGENCE_COLUMNS
    assert len(records) == 4
    assert float(records[0]['fd_im']) == 0.01
    assert float(records[0]['abs_err']) == ROWS[0].abs_err
    assert records[1]['vlin_re'] == '' and records[1]['lin_err'] == ''
    assert path.read_text().endswith('\n')


def test_error_ratios():
    ratios = error_ratios(ROWS)
    assert ratios == pytest.approx([ROWS[0].abs_err / ROWS[2].abs_err, ROWS[1].abs_err / ROWS[3].abs_err])
    assert len(error_ratios(ROWS, 'lin_err')) == 1


def test_gateaux_table(tmp_path):
    rows = [GateauxRow(0.2, -0.12, -0.1, -0.118), GateauxRow(0.1, -0.11, -0.1, None)]
    records = read_csv(write_gateaux_table(tmp_path / "gateaux.csv", rows))
    assert tuple(records[0]) == GATEAUX_COLUMNS
    assert float(records[0]['abs_err']) == pytest.approx(0.02)
    assert float(records[0]['lin_err']) == pytest.approx(0.002)
    assert records[1]['linearized'] == ''


def test_run_log(tmp_path):
    reports = [ExtremalReport(1, 2.1, 0.15, 0.3, 0.26), ExtremalReport(2, 2.15, 0.07, 0.1, 0.13)]
    records = read_csv(write_run_log(tmp_path / "run_log.csv", reports))
    assert tuple(records[0]) == RUN_LOG_COLUMNS
    assert [r['iter'] for r in records] == ['1', '2']
    assert float(records[1]['omega']) == 2.15
