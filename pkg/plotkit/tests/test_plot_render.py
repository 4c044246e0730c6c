"""Rendering: every table kind draws, re-renders are byte-identical,
schema violations raise."""

import pytest

from plotkit import FigureSpec, SchemaError, render
from plotkit.figures import load_table

RENDER_KINDS = ["rate-region", "stability-sweep", "truncation-sweep",
                "index-table", "queue-trace"]


@pytest.mark.parametrize("kind", RENDER_KINDS)
@pytest.mark.parametrize("fmt", ["png", "svg"])
def test_render_all_kinds(tables, tmp_path, kind, fmt):
    out = tmp_path / f"{kind}.{fmt}"
    result = render(FigureSpec(str(tables[kind]), kind, str(out)))
    assert result == out
    assert out.stat().st_size > 0


@pytest.mark.parametrize("fmt", ["png", "svg"])
def test_rerender_byte_identical(tables, tmp_path, fmt):
    for kind in RENDER_KINDS:
        a = tmp_path / f"a-{kind}.{fmt}"
        b = tmp_path / f"b-{kind}.{fmt}"
        render(FigureSpec(str(tables[kind]), kind, str(a)))
        render(FigureSpec(str(tables[kind]), kind, str(b)))
        assert a.read_bytes() == b.read_bytes(), kind


def test_reference_lines_and_labels(tables, tmp_path):
    out = tmp_path / "with-refs.png"
    spec = FigureSpec(
        str(tables["stability-sweep"]), "stability-sweep", str(out),
        xlabel="scaling", ylabel="slope", title="probe",
        ref_lines={"budget": 1.0},
    )
    render(spec)
    assert out.exists()


def test_figure_spec_validation(tables):
    with pytest.raises(ValueError):
        FigureSpec(str(tables["index-table"]), "bogus-kind", "x.png")
    with pytest.raises(ValueError):
        FigureSpec(str(tables["index-table"]), "index-table", "x.pdf")


def test_missing_file_and_empty_csv(tmp_path):
    with pytest.raises(SchemaError):
        load_table(tmp_path / "nope.csv", "index-table")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaError):
        load_table(empty, "index-table")
    header_only = tmp_path / "h.csv"
    header_only.write_text("user,position,state,age,belief,whittle_index\n")
    with pytest.raises(SchemaError):
        load_table(header_only, "index-table")


def test_wrong_schema_for_kind(tables):
    # an index table is not a rate-region table
    with pytest.raises(SchemaError):
        load_table(tables["index-table"], "rate-region")


def test_ragged_and_non_numeric_rows(tmp_path):
    ragged = tmp_path / "r.csv"
    ragged.write_text("tau,f_tau,g_tau,v_tau,v_ref,gap,bound,slack\n1,2,3\n")
    with pytest.raises(SchemaError):
        load_table(ragged, "truncation-sweep")
    bad = tmp_path / "b.csv"
    bad.write_text(
        "tau,f_tau,g_tau,v_tau,v_ref,gap,bound,slack\n"
        "10,zap,1,1,1,0,1,1\n"
    )
    with pytest.raises(SchemaError):
        render(FigureSpec(str(bad), "truncation-sweep", str(tmp_path / "b.png")))


def test_rate_region_requires_gamma_columns(tmp_path):
    no_gamma = tmp_path / "g.csv"
    no_gamma.write_text("direction,z_hat,z_stderr,slack\n0,1.0,0.0,False\n")
    with pytest.raises(SchemaError):
        render(FigureSpec(str(no_gamma), "rate-region", str(tmp_path / "g.png")))
