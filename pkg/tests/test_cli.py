import csv
import json

import pytest

from multitime.cli import SCHEMA, csv_text, main


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8")) if (out / "manifest.json").exists() else None
    return code, manifest, out


def test_empty_check_list_gives_empty_manifest(tmp_path):
    code, manifest, _ = run(tmp_path, "zerorange", "--check", "none")
    assert code == 0
    assert manifest["checks"] == [] and manifest["all_passed"]


def test_manifest_keys_are_sorted_and_echo_config(tmp_path):
    code, manifest, out = run(tmp_path, "born", "--eps", "0.1", "--refinements", "2", "--check", "probability")
    assert code == 0
    text = (out / "manifest.json").read_text(encoding="utf-8")
    assert list(json.loads(text)) == sorted(json.loads(text))
    assert manifest["config"]["eps"] == 0.1
    assert [c["name"] for c in manifest["checks"]] == ["total_probability"]


def test_born_csv_columns(tmp_path):
    _, _, out = run(tmp_path, "born", "--eps", "0.2", "--refinements", "2", "--check", "none")
    with open(out / "born.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["eps", "tv_distance", "total_probability", "mutual_information"]
    assert [float(r[0]) for r in rows[1:]] == [0.2, 0.1]


def test_csv_uses_crlf_and_quotes():
    text = csv_text(("a", "b"), [("x,y", 1.5)])
    assert text == 'a,b\r\n"x,y",1.5\r\n'


def test_resource_guard(tmp_path, capsys):
    code, _, _ = run(tmp_path, "qft", "--nmax", "9", "--sites", "32")
    assert code == 3
    assert "resource budget" in capsys.readouterr().err


def test_domain_error_exit_code(tmp_path):
    code, _, _ = run(tmp_path, "born", "--surface", "[[-1, 0], [1, 2]]")
    assert code == 4


def test_unknown_config_keys_rejected(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[born]\nepsilon = 0.1\n")
    assert run(tmp_path, "born", "--config", str(cfg))[0] == 2
    cfg.write_text("[bron]\neps = 0.1\n")
    assert run(tmp_path, "born", "--config", str(cfg))[0] == 2
    cfg.write_text("colour = 1\n")
    assert run(tmp_path, "born", "--config", str(cfg))[0] == 2
    cfg.write_text("[qft]\nsites = 'four'\n")
    assert run(tmp_path, "born", "--config", str(cfg))[0] == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 5\ntolerance_profile = "strict"\n[born]\neps = 0.4\nrefinements = 1\ncheck = ["probability"]\n')
    code, manifest, _ = run(tmp_path, "born", "--config", str(cfg), "--eps", "0.2")
    assert code == 0
    assert manifest["config"]["eps"] == 0.2 and manifest["config"]["refinements"] == 1
    assert manifest["seed"] == 5 and manifest["tolerance_profile"] == "strict"


def test_unknown_check_name_rejected(tmp_path):
    assert run(tmp_path, "born", "--check", "everything")[0] == 2


def test_failed_check_gives_exit_one(tmp_path):
    # a single refinement cannot reach the finest-TV tolerance
    code, manifest, _ = run(tmp_path, "born", "--eps", "0.4", "--refinements", "1", "--check", "convergence")
    assert code == 1 and not manifest["all_passed"]


def test_same_seed_same_bytes(tmp_path):
    args = ["consistency", "--model", "free", "--seed", "9"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert (a / "consistency.csv").read_bytes() == (b / "consistency.csv").read_bytes()


def test_every_schema_entry_has_help():
    for sub, schema in SCHEMA.items():
        for key, spec in schema.items():
            assert spec.help, (sub, key)
