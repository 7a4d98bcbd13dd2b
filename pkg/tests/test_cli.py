import filecmp
import os

import pytest

from rannlab import cli, cns

FAST_PME = ["--override", "sweep.widths=10,20,40", "--override", "sweep.repeats=2",
            "--override", "sweep.eval_points=2000"]


@pytest.mark.parametrize("cmd", list(cli.COMMANDS))
def test_default_config_roundtrip(cmd):
    text = cli.default_config_text(cmd)
    assert text.startswith(cli.HEADER + "\n")
    vals = cli.parse_config(text, cmd)
    assert vals["run"]["seed"] == 0


def test_missing_config_exit_1(tmp_path, capsys):
    missing = str(tmp_path / "absent.ini")
    assert cli.main(["pme-sweep", "--config", missing]) == 1
    assert missing in capsys.readouterr().err


def test_malformed_config_lists_keys_with_lines(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("rannlab-config 1\n[sweep]\nrepeats = 0\nwidthz = 1\n[nope]\n")
    assert cli.main(["pme-sweep", "--config", str(p)]) == 1
    err = capsys.readouterr().err
    assert "bad.ini:3: sweep.repeats" in err and "bad.ini:4: unknown key sweep.widthz" in err
    assert "bad.ini:5: unknown section [nope]" in err


def test_header_required(tmp_path):
    p = tmp_path / "h.ini"
    p.write_text("[sweep]\nrepeats = 2\n")
    with pytest.raises(cli.ConfigError, match=":1:"):
        cli.parse_config(p.read_text(), "pme-sweep", str(p))
    assert cli.main(["pme-sweep", "--config", str(p), "--override", "sweep.repeats=3"]) == 1


def test_bad_override():
    assert cli.main(["cns-wave", "--override", "novalue"]) == 1
    assert cli.main(["cns-wave", "--override", "problem.gamma=-1"]) == 1


def test_cns_wave_default(tmp_path, capsys):
    out = tmp_path / "w"
    assert cli.main(["cns-wave", "--config", "default", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "[problem]" in printed and "v_plus = 1.5" in printed
    with open(out / "wave.csv") as fh:
        rows = fh.read().splitlines()
    assert rows[0] == "xi,v,u" and len(rows) == 5001
    assert (out / "wave.svg").exists() and (out / "config.ini").exists()


def test_pme_sweep_deterministic_and_confined(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("a", "b"):
        assert cli.main(["pme-sweep", "--seed", "11", "--out", name, "-q"] + FAST_PME) == 0
    assert sorted(os.listdir(tmp_path)) == ["a", "b"]
    files = sorted(os.listdir("a"))
    assert {"pme_d1_raw.csv", "pme_d1_summary.csv", "pme_d1_loglog.png",
            "pme_d1_loglog.svg", "config.ini"} <= set(files)
    match, mismatch, errors = filecmp.cmpfiles("a", "b", files, shallow=False)
    assert not mismatch and not errors


def test_seed_flag_overrides_config(tmp_path):
    out = tmp_path / "s"
    assert cli.main(["pme-sweep", "--seed", "5", "--out", str(out), "-q"] + FAST_PME) == 0
    assert "seed = 5" in (out / "config.ini").read_text()


def test_numerical_failure_exit_2(tmp_path, monkeypatch):
    def boom(params):
        raise cns.IntegrationError("forced")
    monkeypatch.setattr(cns, "integrate_wave", boom)
    assert cli.main(["cns-wave", "--out", str(tmp_path / "x")]) == 2


def test_theory_report(tmp_path):
    assert cli.main(["theory-report", "--out", str(tmp_path), "-q"]) == 0
    text = (tmp_path / "theory.csv").read_text()
    assert text.startswith("quantity,value") and "M_psi" in text


def test_default_config_subcommand(capsys):
    assert cli.main(["default-config", "cns-sweep"]) == 0
    out = capsys.readouterr().out
    assert "m_factor = 2000" in out and "std = 3.5" in out
