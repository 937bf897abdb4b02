import math

import pytest

from episcale import ConfigError, DomainError
from episcale.cli import main, parse_config

MIN = "gamma = 1\ne0 = 10\nb = 1\nd = 0.5\nr0_ratio = 16777216\n"


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_are_filled():
    cfg = parse_config(MIN + "# comment line\n")
    params = cfg.params()
    assert params.c0 == 1.0 and params.c1 == 1.0
    assert params.r0 == pytest.approx(1 / (10 * 64.0**4))
    assert cfg.quad().base_cell == 0.25


@pytest.mark.parametrize("text,message", [
    (MIN + "d = 0.1\n", "duplicate"),
    (MIN + "colour = red\n", "unknown key"),
    ("gamma 1\n", "key = value"),
    ("sweep_per_decade = many\n", "expects a number"),
])
def test_malformed_documents(text, message):
    with pytest.raises(ConfigError, match=message) as info:
        parse_config(text)
    assert "line" in str(info.value)


def test_r0_outside_unit_interval():
    with pytest.raises(DomainError, match=r"\(0,1\]"):
        parse_config("r0 = 2\n")


def test_missing_d_exits_with_usage_error(tmp_path, capsys):
    cfg = write(tmp_path, "gamma = 1\ne0 = 1\nb = 0.001\nr0 = 1e-9\n")
    assert main(["energy", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "d" in capsys.readouterr().err


def test_unknown_command_exits_1(tmp_path):
    assert main(["fly", "--config", write(tmp_path, MIN)]) == 1


def test_two_ball_run(tmp_path):
    cfg = write(tmp_path, "balls = 0,0,1; 4,0,1\nt_final = 1\nsample_times = 0,0.5,1\n")
    out = tmp_path / "o"
    assert main(["balls", "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
    lines = (out / "balls.csv").read_text().splitlines()
    assert lines[0].startswith("# episcale balls seed=5 ")
    assert lines[1] == "t,event,id_a,id_b,id_new,cx,cy,r"
    (merge,) = [ln for ln in lines[2:] if ",collision," in ln]
    assert float(merge.split(",")[0]) == pytest.approx(math.log(2), abs=1e-12)
    report = (out / "balls_report.csv").read_text().splitlines()
    assert report[-1] == "0,2,1,0"


def test_energy_files_carry_header(tmp_path):
    cfg = write(tmp_path, MIN + "construction = dislocation_free\n")
    assert main(["energy", "--config", cfg, "--out", str(tmp_path), "--seed", "3"]) == 0
    lines = (tmp_path / "energy_dislocation_free.csv").read_text().splitlines()
    assert lines[0].startswith("# episcale energy seed=3 ") and "d=0.5" in lines[0]
    assert lines[1].startswith("# construction=dislocation_free L=")
    assert lines[2] == "surface,elastic,nucleation,total,elastic_err"


def test_sweep_reports_exponent(tmp_path):
    text = MIN + "construction = dislocation_free\nsweep_first_decade = -3\n"
    out = tmp_path / "s"
    assert main(["sweep", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 2 + 30
    fit = (out / "fit.csv").read_text().splitlines()[-1].split(",")
    assert float(fit[3]) == pytest.approx(2 / 3, abs=0.05)


def test_sweep_output_is_byte_identical(tmp_path):
    text = MIN + "construction = dislocation_free\nsweep_first_decade = -2\nsweep_decades = 1\n"
    cfg = write(tmp_path, text)
    outs = []
    for name, threads in (("a", "1"), ("b", "3")):
        out = tmp_path / name
        assert main(["sweep", "--config", cfg, "--out", str(out), "--seed", "9",
                     "--threads", threads]) == 0
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]


def test_random_ball_families(tmp_path):
    cfg = write(tmp_path, "random_families = 25\nt_final = 2\nsample_times = 0,0.5,1,2\n")
    assert main(["balls", "--config", cfg, "--out", str(tmp_path), "--seed", "1"]) == 0
    report = (tmp_path / "balls_report.csv").read_text().splitlines()
    assert len(report) == 2 + 25
    assert all(ln.endswith(",0") for ln in report[2:])
