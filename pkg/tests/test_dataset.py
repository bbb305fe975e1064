import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from persuasion_did import errors
from persuasion_did.dataset import (StaggeredPanel, StaggeredSchema, TwoPeriodPanel, TwoPeriodSchema,
                                    load_staggered_csv, load_two_period_csv, to_cells, validate)
from persuasion_did.errors import ValidationError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_csv(tmp_path):
    p = write(tmp_path, "y0,y1,d1\n0,1,1\n1,1,0\n0,0,0\n1,0,1\n")
    panel = load_two_period_csv(p)
    assert panel.n == 4 and panel.k == 0
    assert panel.treated.tolist() == [True, False, False, True]


def test_non_binary_reports_row(tmp_path):
    p = write(tmp_path, "y0,y1,d1\n0,1,1\n1,2,0\n")
    with pytest.raises(ValidationError) as exc:
        load_two_period_csv(p)
    assert exc.value.code == errors.NON_BINARY_VALUE
    assert exc.value.context["row"] == 2


def test_all_treated_is_empty_arm(tmp_path):
    p = write(tmp_path, "y0,y1,d1\n0,1,1\n1,1,1\n")
    with pytest.raises(ValidationError) as exc:
        load_two_period_csv(p)
    assert exc.value.code == errors.EMPTY_ARM


def test_missing_column(tmp_path):
    p = write(tmp_path, "a,y1,d1\n0,1,1\n")
    with pytest.raises(ValidationError) as exc:
        load_two_period_csv(p)
    assert exc.value.code == errors.MISSING_COLUMN


def test_listwise_deletion(tmp_path, caplog):
    p = write(tmp_path, "y0,y1,d1,x\n0,1,1,2\n1,,0,3\n0,0,0,1\n1,0,1,\n")
    with caplog.at_level("WARNING"):
        panel = load_two_period_csv(p, TwoPeriodSchema(x=("x",)))
    assert panel.n == 2
    assert "dropped 2" in caplog.text


def test_custom_columns_and_clusters(tmp_path):
    p = write(tmp_path, "pre,post,treat,g,c\n0,1,1,1.5,a\n1,1,0,2.5,a\n0,0,0,1.0,b\n")
    panel = load_two_period_csv(p, TwoPeriodSchema("pre", "post", "treat", ("g",), "c"))
    assert panel.x_names == ("g",)
    assert panel.cluster.tolist() == ["a", "a", "b"]


def test_staggered_wide(tmp_path):
    p = write(tmp_path, "y0,y1,y2,s\n0,1,1,1\n0,0,1,inf\n1,1,0,INF\n")
    panel = load_staggered_csv(p, StaggeredSchema(y=("y0", "y1", "y2")))
    assert panel.T == 2
    assert panel.cohorts() == [1]
    assert panel.never.sum() == 2


def test_staggered_s_zero(tmp_path):
    p = write(tmp_path, "y0,y1,s\n0,1,0\n0,0,inf\n")
    with pytest.raises(ValidationError) as exc:
        load_staggered_csv(p, StaggeredSchema(y=("y0", "y1")))
    assert exc.value.code == errors.INVALID_ADOPTION_TIME
    assert exc.value.context["row"] == 1


def test_staggered_no_never(tmp_path):
    p = write(tmp_path, "y0,y1,s\n0,1,1\n0,0,1\n")
    with pytest.raises(ValidationError) as exc:
        load_staggered_csv(p, StaggeredSchema(y=("y0", "y1")))
    assert exc.value.code == errors.NO_NEVER_TREATED


def test_staggered_custom_infinity_token(tmp_path):
    p = write(tmp_path, "y0,y1,s\n0,1,1\n0,0,never\n")
    panel = load_staggered_csv(p, StaggeredSchema(y=("y0", "y1")), infinity_token="never")
    assert np.isinf(panel.s[1])


def test_staggered_long_matches_wide(tmp_path):
    wide = write(tmp_path, "id,y0,y1,y2,s\n1,0,1,1,2\n2,0,0,1,inf\n3,1,1,0,1\n", "w.csv")
    long_rows = ["unit,period,y,s"]
    for uid, ys, s in ((1, (0, 1, 1), "2"), (2, (0, 0, 1), "inf"), (3, (1, 1, 0), "1")):
        long_rows += [f"{uid},{t},{v},{s}" for t, v in enumerate(ys)]
    lng = write(tmp_path, "\n".join(long_rows) + "\n", "l.csv")
    a = load_staggered_csv(wide, StaggeredSchema(y=("y0", "y1", "y2")))
    b = load_staggered_csv(lng, StaggeredSchema(layout="long"))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.s, b.s)


def test_cells_counts():
    panel = TwoPeriodPanel([0, 1, 0, 0], [1, 1, 0, 0], [1, 0, 0, 0])
    table = to_cells(panel)
    assert len(table.counts) == 8 and table.n == 4
    assert table.counts[(0, 0, 0)] == 2


def test_cells_level_cap():
    rng = np.random.default_rng(0)
    panel = TwoPeriodPanel([0, 1] * 10, [1, 0] * 10, [0, 1] * 10, rng.normal(size=20))
    with pytest.raises(ValidationError) as exc:
        to_cells(panel, discrete_x=True, level_cap=10)
    assert exc.value.code == errors.TOO_MANY_LEVELS


def test_panels_are_read_only():
    panel = TwoPeriodPanel([0, 1], [1, 1], [1, 0])
    with pytest.raises(ValueError):
        panel.y0[0] = 1.0


binary = st.integers(0, 1)
rows = st.lists(st.tuples(binary, binary, binary, st.integers(0, 2)), min_size=2, max_size=60)


@given(rows, st.booleans())
def test_cell_round_trip(data, with_x):
    d = [r[2] for r in data]
    if len(set(d)) < 2:
        return
    arr = np.array(data, dtype=float)
    panel = TwoPeriodPanel(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3:] if with_x else None)
    table = to_cells(panel, discrete_x=with_x)
    again = to_cells(table.to_panel(), discrete_x=with_x)
    assert again == table


@given(rows)
def test_validate_idempotent(data):
    arr = np.array(data, dtype=float)
    if len(set(arr[:, 2])) < 2:
        return
    panel = TwoPeriodPanel(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3:])
    once = validate(panel)
    assert once == panel and validate(once) == once


def test_validate_staggered_idempotent():
    panel = StaggeredPanel(np.array([[0, 1, 1], [0, 0, 1]]), [2, np.inf])
    assert np.array_equal(validate(panel).y, panel.y)


def test_to_two_period():
    sp = StaggeredPanel(np.array([[0, 1], [1, 1], [0, 0]]), [1, np.inf, 1])
    tp = sp.to_two_period()
    assert tp.d1.tolist() == [1, 0, 1]
