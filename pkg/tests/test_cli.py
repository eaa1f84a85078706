import json

import numpy as np
import pytest

from uhet.cli import main


def write_csv(path, n_strata=2, n=14, seed=0):
    gen = np.random.default_rng(seed)
    lines = ["site,trt,y,z"]
    for s in range(n_strata):
        for i in range(n):
            t = 1 if i % 2 else 0
            z = float(gen.standard_normal())
            y = float(1.0 + t + 0.5 * z + gen.standard_normal())
            lines.append(f"s{s},{t},{y!r},{z!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


BASE = ["--stratum-col", "site", "--treatment-col", "trt",
        "--outcome-col", "y", "--covariates", "z"]


def run_test_cmd(tmp_path, csv, extra=()):
    out = tmp_path / "report.json"
    code = main(["test", "--input", str(csv), *BASE, "--seed", "7",
                 "--trim", "none", "--ref-samples", "2000",
                 "--out", str(out), *extra])
    return code, out


def test_happy_path(tmp_path, capsys):
    csv = write_csv(tmp_path / "d.csv")
    code, out = run_test_cmd(tmp_path, csv)
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("T_a=") and " p=" in line
    payload = json.loads(out.read_text())
    assert 0.0 <= payload["p_value"] <= 1.0
    assert payload["seed"] == 7
    assert payload["n_strata"] == 2


def test_with_lrt_and_unadjusted(tmp_path):
    csv = write_csv(tmp_path / "d.csv")
    code, out = run_test_cmd(tmp_path, csv, extra=["--with-lrt"])
    assert code == 0
    assert "lrt" in json.loads(out.read_text())
    code, out = run_test_cmd(tmp_path, csv, extra=["--unadjusted"])
    assert code == 0
    assert json.loads(out.read_text())["config"]["method"] == "unadjusted"


def test_missing_seed_is_usage_error(tmp_path, capsys):
    csv = write_csv(tmp_path / "d.csv")
    code = main(["test", "--input", str(csv), *BASE])
    assert code == 2
    assert "--seed" in capsys.readouterr().err


def test_unknown_flag_is_fatal(tmp_path, capsys):
    csv = write_csv(tmp_path / "d.csv")
    code = main(["test", "--input", str(csv), *BASE, "--seed", "7",
                 "--turbo"])
    assert code == 2


def test_missing_file(tmp_path, capsys):
    code = main(["test", "--input", str(tmp_path / "nope.csv"), *BASE,
                 "--seed", "7"])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code = main(["test", "--input", str(empty), *BASE, "--seed", "7"])
    assert code == 2
    assert "header" in capsys.readouterr().err


def test_single_group_stratum_names_it(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    lines = ["site,trt,y,z"]
    lines += [f"solo,1,{i},{i}" for i in range(6)]
    lines += [f"ok,{i % 2},{i},{i}" for i in range(6)]
    bad.write_text("\n".join(lines) + "\n")
    code = main(["test", "--input", str(bad), *BASE, "--seed", "7"])
    assert code == 2
    assert "solo" in capsys.readouterr().err


def test_validate_single_stratum_notes_requirement(tmp_path, capsys):
    csv = write_csv(tmp_path / "one.csv", n_strata=1)
    code = main(["validate", "--input", str(csv), *BASE])
    assert code == 0
    out = capsys.readouterr().out
    assert "S >= 2 required for testing" in out


def test_validate_summary(tmp_path):
    csv = write_csv(tmp_path / "d.csv")
    out = tmp_path / "summary.json"
    code = main(["validate", "--input", str(csv), *BASE, "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["n_strata"] == 2
    assert payload["n_total"] == 28
    assert "note" not in payload


def test_simulate_runs_and_repeats_byte_identical(tmp_path):
    outs = []
    for name in ("a.tsv", "b.tsv"):
        out = tmp_path / name
        code = main(["simulate", "--preset", "validity", "--reps", "2",
                     "--n", "20", "--kernel-factor", "50",
                     "--ref-samples", "2000", "--seed", "3",
                     "--format", "tsv", "--out", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[0].split("\t")
    assert "reject_rate" in header


def test_simulate_unknown_preset(tmp_path, capsys):
    code = main(["simulate", "--preset", "mystery", "--reps", "1",
                 "--seed", "3"])
    assert code == 2
    assert "validity, power, sensitivity" in capsys.readouterr().err


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
