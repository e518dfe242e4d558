import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drenv.trace import CSV_HEADER, IterationTrace

finite = st.floats(allow_nan=False, allow_infinity=False)


def test_empty_trace():
    tr = IterationTrace()
    assert len(tr) == 0 and not tr.converged
    assert tr.to_csv_string() == "k,residual,merit,gamma,elapsed_ns\n"
    assert np.isnan(tr.summary()["min_residual"])


def test_summary_and_accessors():
    tr = IterationTrace()
    for k, r in enumerate([3.0, 1.0, 2.0]):
        tr.append(k, r, -k, 0.5, 10 * k)
    tr.reason = "max_iter"
    assert tr.summary() == {"iterations": 3, "min_residual": 1.0, "reason": "max_iter"}
    assert np.array_equal(tr.merits, [0.0, -1.0, -2.0])
    assert np.array_equal(tr.gammas, [0.5] * 3)


@given(st.lists(st.tuples(finite, finite, st.floats(1e-12, 1e6), st.integers(0, 2**62)),
                max_size=20))
def test_csv_round_trip_is_exact(rows):
    tr = IterationTrace()
    for k, (r, m, g, ns) in enumerate(rows):
        tr.append(k, r, m, g, ns)
    back = IterationTrace.from_csv(io.StringIO(tr.to_csv_string()))
    assert back.records == tr.records
    assert back.to_csv_string() == tr.to_csv_string()


def test_csv_file_round_trip(tmp_path):
    tr = IterationTrace()
    tr.append(0, 0.1, 1e-300, 0.25, 5)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    text = p.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "," in text and ";" not in text
    assert IterationTrace.from_csv(p).records == tr.records


def test_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        IterationTrace.from_csv(io.StringIO("a,b\n1,2\n"))
