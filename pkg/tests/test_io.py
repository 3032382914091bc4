import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from onmf.io import DataError, load_matrix, read_trace, save_matrix, trace_csv, write_trace
from onmf.online import TraceRecord


@settings(max_examples=50, deadline=None)
@given(M=arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
                elements=st.floats(-1e300, 1e300)))
def test_matrix_round_trip_is_exact(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("m") / "m.txt"
    save_matrix(path, M)
    np.testing.assert_array_equal(load_matrix(path), M)


def test_header_line(tmp_path):
    save_matrix(tmp_path / "a.txt", np.ones((2, 3)))
    assert (tmp_path / "a.txt").read_text().splitlines()[0] == "2 3"


def test_headerless_csv_and_whitespace(tmp_path):
    (tmp_path / "c.csv").write_text("1,2,3\n4,5,6\n")
    np.testing.assert_array_equal(load_matrix(tmp_path / "c.csv"), [[1, 2, 3], [4, 5, 6]])
    (tmp_path / "w.txt").write_text("# comment\n1 2\n3 4\n5 6\n")
    np.testing.assert_array_equal(load_matrix(tmp_path / "w.txt"), [[1, 2], [3, 4], [5, 6]])


@pytest.mark.parametrize("text", ["", "1 2\n3\n", "1 x\n", "1 nan\n"])
def test_bad_files(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(DataError):
        load_matrix(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_matrix(tmp_path / "nope.txt")


def test_trace_csv(tmp_path):
    recs = [TraceRecord(1, 10, 0.5, 0.25), TraceRecord(2, 20, 0.125, 0.2, 3e-3, 7)]
    text = trace_csv(recs)
    assert text.splitlines() == [
        "t,samples_seen,empirical_loss,eta,stationarity_residual,wall_ms",
        "1,10,0.5,0.25,,0",
        "2,20,0.125,0.2,0.003,7",
    ]
    write_trace(tmp_path / "t.csv", recs)
    rows = read_trace(tmp_path / "t.csv")
    assert rows[1]["empirical_loss"] == "0.125"
