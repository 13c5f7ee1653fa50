import math

import pytest

from randcert.sweep import COLUMNS, SweepSpec, parse_grid, parse_number, rows_to_csv, run_point, run_sweep


@pytest.mark.parametrize("text,value", [
    ("0.42", 0.42), ("3/4", 0.75), ("pi", math.pi), ("pi/4", math.pi / 4),
    ("27/200pi", 27 * math.pi / 200), ("2*pi/3", 2 * math.pi / 3), ("-1/2", -0.5),
])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("bad", ["pix", "abc", "1/0pi", ""])
def test_parse_number_rejects(bad):
    with pytest.raises((ValueError, ZeroDivisionError)):
        parse_number(bad)


def test_parse_grid():
    assert parse_grid("0.8:1:0.05") == pytest.approx([0.8, 0.85, 0.9, 0.95, 1.0])
    assert parse_grid("0.8,0.9, 1") == [0.8, 0.9, 1.0]
    g = parse_grid("pi/40:pi/4:pi/40")
    assert len(g) == 10 and g[-1] == pytest.approx(math.pi / 4)
    assert parse_grid("0:1:0.3")[-1] == 1.0          # stop is always included
    for bad in ("1:0:0.1", "0:1:0", ","):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_default_specs():
    s = SweepSpec.default("chsh-noise")
    assert s.grid[0] == pytest.approx(0.75) and s.grid[-1] == pytest.approx(1.0) and len(s.grid) == 26
    assert SweepSpec.default("partial-entangled").level == 3
    with pytest.raises(ValueError):
        SweepSpec.default("chsh-noise", modes=["i1beta"])
    with pytest.raises(ValueError):
        SweepSpec.default("nope")


def test_points_are_grid_major():
    s = SweepSpec.default("chsh-noise", grid="0.9,1")
    assert s.points() == [(0.9, "full"), (0.9, "chsh"), (1.0, "full"), (1.0, "chsh")]


def test_run_point_fills_fit_for_full_mode():
    s = SweepSpec.default("chsh-noise", grid="0.9")
    row = run_point(s, 0.9, "full")
    assert row["status"] == "optimal" and set(row) == set(COLUMNS)
    assert abs(row["G"] - row["bound"]) <= 2e-6 and row["f11"] != ""
    assert run_point(s, 0.9, "chsh")["f11"] == ""


def test_failures_become_rows():
    s = SweepSpec.default("chsh-noise", grid="1.1")
    row = run_point(s, 1.1, "full")
    assert row["status"].startswith("invalid") and row["G"] == ""


def test_csv_is_deterministic():
    s = SweepSpec.default("chsh-noise", grid="0.85,0.95", level=1)
    a, b = rows_to_csv(run_sweep(s)), rows_to_csv(run_sweep(s))
    assert a == b
    lines = a.splitlines()
    assert lines[0] == ",".join(COLUMNS) and len(lines) == 5


def test_workers_do_not_change_output():
    s = SweepSpec.default("chsh-noise", grid="0.8,0.9,1", level=1)
    assert rows_to_csv(run_sweep(s, workers=2)) == rows_to_csv(run_sweep(s, workers=1))


def test_plot(tmp_path):
    pytest.importorskip("matplotlib")
    from randcert.sweep import plot_rows

    rows = run_sweep(SweepSpec.default("chsh-noise", grid="0.9,1", level=1))
    plot_rows(rows, str(tmp_path / "fig.png"), title="chsh")
    assert (tmp_path / "fig.png").stat().st_size > 1000
