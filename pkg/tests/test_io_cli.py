import json
import math

import numpy as np
import pytest

from starkecho import io, svg
from starkecho.cli import UsageError, main, parse_grid, parse_number
from starkecho.sequence import preset, serialize_sequence


def cli(*args):
    return main([str(a) for a in args])


# -- helpers ----------------------------------------------------------------

@pytest.mark.parametrize("text, value", [
    ("0", 0.0), ("1.5", 1.5), ("pi", math.pi), ("pi/2", math.pi / 2), ("3pi/2", 1.5 * math.pi),
    ("2*pi", 2 * math.pi), ("-pi", -math.pi), ("1e-3", 1e-3), ("-0.25", -0.25), ("+2", 2.0),
])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value)


@pytest.mark.parametrize("bad", ["", "tau", "pi*pi", "1..2", "-", "2*"])
def test_parse_number_bad(bad):
    with pytest.raises(UsageError):
        parse_number(bad)


def test_parse_grid():
    g = parse_grid("0:pi:33")
    assert len(g) == 33 and g[0] == 0 and g[-1] == pytest.approx(math.pi)
    assert g[16] == pytest.approx(math.pi / 2)
    np.testing.assert_allclose(parse_grid("0,pi/2"), [0, math.pi / 2])
    with pytest.raises(UsageError):
        parse_grid("0:pi")


def test_fmt_twelve_digits():
    assert io.fmt(math.pi) == "3.14159265359"
    assert io.fmt(0.0) == "0"
    assert io.fmt(-1.5e-20) == "-1.5e-20"


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "a.txt"
    io.atomic_write(target, "one")
    io.atomic_write(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["a.txt"]


def test_read_gamma(tmp_path):
    f = tmp_path / "g.csv"
    f.write_text("# decay\n0,0,0\n0,0.1,0\n0,0,0\n")
    g = io.read_gamma(f)
    assert g.shape == (3, 3) and g[1, 1] == 0.1
    f.write_text("0,0\n0,0\n")
    with pytest.raises(ValueError, match="3x3"):
        io.read_gamma(f)
    f.write_text("0,0,0\n0,-1,0\n0,0,0\n")
    with pytest.raises(ValueError, match="non-negative"):
        io.read_gamma(f)


# -- run --------------------------------------------------------------------

@pytest.fixture(scope="module")
def fig4a_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("fig4a")
    assert cli("run", "--preset", "fig4a", "--out", d) == 0
    return d


def test_run_outputs(fig4a_run):
    lines = (fig4a_run / "trace.csv").read_text().splitlines()
    assert len(lines) == 2502  # header + 2501 grid points
    assert lines[0] == ",".join(io.TRACE_COLUMNS)
    assert lines[1].split(",")[7] == "1"
    echoes = json.loads((fig4a_run / "echoes.json").read_text())
    assert [(e["label"], e["character"]) for e in echoes] == [("e1", "silent"), ("e2", "emissive")]
    m = json.loads((fig4a_run / "manifest.json").read_text())
    assert m["sequence"] == serialize_sequence(preset("fig4a"))
    assert m["config"]["dt"] == 0.01 and m["config"]["method"] == "exact_piecewise"
    assert m["ensemble"]["groups"] == 201
    assert m["version"] and m["wall_seconds"] >= 0
    assert not (fig4a_run / "groups.csv").exists()


def test_run_figS1a_echoes(tmp_path):
    assert cli("run", "--preset", "figS1a", "--out", tmp_path) == 0
    echoes = json.loads((tmp_path / "echoes.json").read_text())
    assert [e["character"] for e in echoes] == ["emissive", "absorptive"]
    assert abs(echoes[0]["echo_time_us"] - 13.0) < 0.1
    assert abs(echoes[1]["echo_time_us"] - 21.0) < 0.1


def test_replay_byte_identical(fig4a_run, tmp_path):
    assert cli("run", "--replay", fig4a_run / "manifest.json", "--out", tmp_path) == 0
    assert (tmp_path / "trace.csv").read_bytes() == (fig4a_run / "trace.csv").read_bytes()


def test_workers_byte_identical(fig4a_run, tmp_path):
    assert cli("run", "--preset", "fig4a", "--workers", 3, "--out", tmp_path) == 0
    assert (tmp_path / "trace.csv").read_bytes() == (fig4a_run / "trace.csv").read_bytes()


def test_run_from_file_with_options(tmp_path):
    seq = tmp_path / "s.seq"
    seq.write_text(
        "dt 0.02us\nend 4us\nensemble fwhm=850khz spacing=50khz groups=11\n"
        "pulse name=D channel=probe at=1us dur=0.1us rabi=1.25mhz\n"
    )
    g = tmp_path / "g.csv"
    g.write_text("0,0,0\n0,0.5,0\n0,0,0\n")
    out = tmp_path / "o"
    assert cli("run", seq, "--per-group", "--gamma", g, "--method", "rk4", "--out", out) == 0
    header, cols = io.read_table(out / "groups.csv")
    assert len(header) == 1 + 2 * 11 and len(cols["time_us"]) == 201
    m = json.loads((out / "manifest.json").read_text())
    assert m["gamma"][1][1] == 0.5 and m["config"]["method"] == "rk4" and m["per_group"]
    _, tr = io.read_table(out / "trace.csv")
    assert tr["p22"][-1] < tr["p22"][tr["time_us"].searchsorted(1.1)]
    replay = tmp_path / "r"
    assert cli("run", "--replay", out / "manifest.json", "--out", replay) == 0
    assert (replay / "trace.csv").read_bytes() == (out / "trace.csv").read_bytes()
    assert (replay / "groups.csv").read_bytes() == (out / "groups.csv").read_bytes()


def test_missing_file(tmp_path, capsys):
    code = cli("run", tmp_path / "missing.seq")
    assert code != 0
    assert "missing.seq" in capsys.readouterr().err


def test_parse_error_exit(tmp_path, capsys):
    f = tmp_path / "bad.seq"
    f.write_text("end 25us\npulse name=D channel=sideways at=1us dur=0.1us rabi=1MHz\n")
    assert cli("run", f) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "unknown channel" in err


def test_bad_gamma_exit(tmp_path):
    g = tmp_path / "g.csv"
    g.write_text("1,2\n")
    assert cli("run", "--preset", "figS1a", "--gamma", g, "--out", tmp_path) == 2


def test_preset_and_file_conflict(tmp_path):
    assert cli("run", "x.seq", "--preset", "fig1b") == 2
    assert cli("run", "--preset", "nope") == 2


# -- other subcommands -------------------------------------------------------

def test_preset_cmd(capsys):
    assert cli("preset", "fig1b") == 0
    assert capsys.readouterr().out == serialize_sequence(preset("fig1b"))
    assert cli("preset") == 0
    assert "figS2_detuned" in capsys.readouterr().out


def test_oracle_cmd(capsys, tmp_path):
    assert cli("oracle", "--preset", "fig3a") == 0
    out = capsys.readouterr().out
    assert "e2: absorptive" in out and "e1: silent" in out
    assert cli("oracle", "--preset", "fig4a", "--json") == 0
    d = json.loads(capsys.readouterr().out)
    assert d["echoes"][1]["character"] == "emissive"
    assert abs(d["echoes"][1]["time_us"] - 21.0) < 0.05
    bad = tmp_path / "odd.seq"
    bad.write_text("end 10us\npulse name=Odd channel=probe at=1us dur=0.1us rabi=1.75mhz\n")
    assert cli("oracle", bad) == 1
    assert "Odd" in capsys.readouterr().err


def test_compare_cmd(capsys, tmp_path):
    assert cli("compare", "--preset", "fig3b", "--out", tmp_path) == 0
    assert "balanced: matches bare" in capsys.readouterr().out
    assert json.loads((tmp_path / "compare.json").read_text())["passed"] is True
    # the oracle ignores level-2 detuning during C; with it on, e2 moves off the prediction
    assert cli("compare", "--preset", "fig4a", "--control-detuning", "group") == 1
    assert "e2" in capsys.readouterr().err


def test_sweep_cmd(tmp_path):
    assert cli("sweep", "--preset", "fig1b", "--phi", "0:pi:5", "--2d", "--offsets=-0.2,0", "--out", tmp_path) == 0
    header, cols = io.read_table(tmp_path / "sweep.csv")
    assert header == list(io.SWEEP_COLUMNS) and len(cols["phi_rad"]) == 5
    info = json.loads((tmp_path / "sweep.json").read_text())
    assert cols["amplitude"][2] < info["silence_threshold"]
    h2, c2 = io.read_table(tmp_path / "sweep2d.csv")
    assert h2 == list(io.SWEEP2D_COLUMNS) and len(c2["amplitude"]) == 10
    np.testing.assert_array_equal(c2["offset_mhz"], [-0.2] * 5 + [0.0] * 5)
    # the zero-offset row repeats the 1-D sweep
    np.testing.assert_array_equal(c2["amplitude"][5:], cols["amplitude"])


def test_sweep_cmd_rejects_base(tmp_path):
    assert cli("sweep", "--preset", "figS1a", "--phi", "0:pi:3", "--out", tmp_path) == 1


def test_plot_cmd(fig4a_run, tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    args = ["plot", fig4a_run / "trace.csv", "--columns", "im12,re12", "--manifest", fig4a_run / "manifest.json"]
    assert cli(*args, "--out", a) == 0
    assert cli(*args, "--out", b) == 0
    text = a.read_text()
    assert a.read_bytes() == b.read_bytes()
    assert text.count("<polyline") == 2
    assert "<title>im12</title>" in text and "<title>re12</title>" in text
    assert 'class="legend"' in text
    assert text.count("<rect") == 2 + 6  # background, frame, one shade per pulse


def test_plot_schema_errors(tmp_path, capsys):
    f = tmp_path / "x.csv"
    f.write_text("t,im12\n0,1\n")
    assert cli("plot", f) == 2
    assert "time_us" in capsys.readouterr().err
    f.write_text("time_us,im12\n0,1\n1,2\n")
    assert cli("plot", f, "--columns", "re12") == 2
    assert cli("plot", tmp_path / "none.csv") == 2


def test_plot_sweep(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("phi_rad,amplitude,intensity,amplitude_homogeneous\n0,1,1,1\n1,0.5,0.25,0.5\n")
    assert cli("plot", f, "--out", tmp_path) == 0
    assert (tmp_path / "s.svg").read_text().count("<polyline") == 1


def test_svg_ticks():
    assert svg.nice_ticks(0, 25) == [0, 5, 10, 15, 20, 25]
    t = svg.nice_ticks(-0.5, 0.5)
    assert t[0] >= -0.5 and t[-1] <= 0.5 and 0.0 in t
    assert np.allclose(np.diff(t), t[1] - t[0])


def test_svg_escapes():
    text = svg.line_chart([0, 1], {"a<b": [0, 1]}, title="x & y")
    assert "a&lt;b" in text and "x &amp; y" in text


def test_svg_coordinates():
    assert svg._f(-0.5) == "-0.5"
    assert svg._f(-0.001) == "0"
    assert svg._f(12.0) == "12"
    assert svg._f(3.14159) == "3.14"
