import json

import pytest

from core.error_handler import ConfigurationError
from core.session import LOCK_NAME, RunSession


def test_session_writes_summary_and_releases_lock(tmp_path):
    with RunSession(tmp_path, 'solve') as session:
        assert (tmp_path / LOCK_NAME).exists()
        session.write('a.txt', lambda p: p.write_text("x"))
        session.record(residual=1e-12, scale=1 + 2j)
        session.finish()
    assert not (tmp_path / LOCK_NAME).exists()
    summary = json.loads((tmp_path / 'summary.json').read_text())
    assert summary['status'] == 'ok'
    assert summary['artifacts'] == ['a.txt']
    assert summary['scale'] == [1.0, 2.0]


def test_busy_directory_is_refused(tmp_path):
    with RunSession(tmp_path, 'solve'):
        with pytest.raises(ConfigurationError, match="in use"):
            RunSession(tmp_path, 'extremal').acquire()


def test_failed_write_restores_previous_artifact(tmp_path):
    (tmp_path / 'table.csv').write_text("old")

    def broken(path):
        path.write_text("half")
        raise OSError("disk full")

    with RunSession(tmp_path, 'variation_check') as session:
        with pytest.raises(OSError):
            session.write('table.csv', broken)
    assert (tmp_path / 'table.csv').read_text() == "old"
    assert not (tmp_path / 'table.csv.bak').exists()
