import json
import subprocess
import sys
from pathlib import Path

import pytest

from fiolab.cli import ConfigError, load_config, main, parse_ladder
from fiolab.experiments import EXPERIMENTS

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


SMALL = """\
seed: 3
modes: 64
experiments:
  - id: w
    kind: weyl_identities
    params: {cases: 2, dims: [1]}
  - id: r
    kind: residue
"""


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = write(tmp_path, "seed: 1\nmodes: 64\nexperiments:\n  - kind: residue\n    params: {modes: 96}\n")
        (c,) = load_config(cfg)
        assert c.params["seed"] == 1 and c.params["modes"] == 96
        (c,) = load_config(cfg, {"modes": 128, "seed": None})
        assert c.params["modes"] == 128 and c.params["seed"] == 1

    def test_defaults_filled(self, tmp_path):
        (c,) = load_config(write(tmp_path, "experiments:\n  - kind: egorov\n"))
        assert set(c.params) == set(EXPERIMENTS["egorov"].params)
        assert c.id == "egorov_0"

    def test_empty_file(self, tmp_path):
        assert load_config(write(tmp_path, "")) == []

    @pytest.mark.parametrize("text,fragment", [
        ("bogus: 1\n", ":1: bogus"),
        ("experiments:\n  - kind: nope\n", ":2: experiments.0.kind"),
        ("experiments:\n  - kind: residue\n    params:\n      tol: -1.0\n", ":4: experiments.0.params.tol"),
        ("experiments:\n  - kind: residue\n    params:\n      tol: abc\n", "expected float"),
        ("experiments:\n  - kind: residue\n    params: {colour: 1}\n", "experiments.0.params.colour"),
        ("experiments:\n  - kind: star_product\n    params: {hbar_ladder: [8, 4]}\n", "must increase"),
        ("experiments:\n  - {id: a, kind: residue}\n  - {id: a, kind: residue}\n", "duplicate id"),
        ("experiments: [\n", "YAML syntax error"),
    ])
    def test_malformed(self, tmp_path, text, fragment):
        with pytest.raises(ConfigError) as info:
            load_config(write(tmp_path, text))
        assert fragment in str(info.value)

    def test_parse_ladder(self):
        assert parse_ladder("4:8") == [4, 5, 6, 7, 8]
        assert parse_ladder("4,16,32") == [4, 16, 32]
        with pytest.raises(ConfigError):
            parse_ladder("four")


class TestVerbs:
    def test_list(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for name in EXPERIMENTS:
            assert name in out

    def test_describe(self, capsys):
        assert main(["describe", "index_match"]) == 0
        out = capsys.readouterr().out
        assert "windings" in out and "tol_route" in out

    def test_describe_unknown(self):
        assert main(["describe", "nothing"]) == 2

    def test_empty_config_runs(self, tmp_path):
        assert main(["run", "--config", str(write(tmp_path, "")), "--out", str(tmp_path / "o")]) == 0
        rep = json.loads((tmp_path / "o" / "report.json").read_text())
        assert rep["summary"]["checks"] == 0 and rep["summary"]["passed"]

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, "experiments:\n  - kind: residue\n    params: {tol: 0.0}\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "experiments.0.params.tol" in capsys.readouterr().err

    def test_failing_check_exit_code(self, tmp_path):
        cfg = write(tmp_path, "experiments:\n  - kind: residue\n    params:\n"
                              "      operators: [{expr: '1/sqrt(1+xi**2)', order: -1, expected: 5.0}]\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("runs")
    cfg = write(tmp, SMALL)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp / d)]) == 0
    return tmp


class TestReport:
    def test_reproducible(self, two_runs):
        reps = [json.loads((two_runs / d / "report.json").read_text()) for d in ("a", "b")]
        for r in reps:
            r.pop("timing")
        assert reps[0] == reps[1]
        for name in ("w.csv", "r.csv"):
            assert (two_runs / "a" / name).read_bytes() == (two_runs / "b" / name).read_bytes()

    def test_record_fields(self, two_runs):
        rep = json.loads((two_runs / "a" / "report.json").read_text())
        assert [e["id"] for e in rep["experiments"]] == ["w", "r"]
        rec = rep["experiments"][0]["records"][0]
        assert {"name", "passed", "provenance", "inputs_digest", "measured", "expected"} <= set(rec)
        assert "runtime" not in json.dumps(rep["experiments"])
        assert rep["environment"]["experiments"]["r"]["modes"] == 64

    def test_parallel_matches_serial(self, two_runs, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "p"), "--jobs", "2"]) == 0
        serial = json.loads((two_runs / "a" / "report.json").read_text())
        par = json.loads((tmp_path / "p" / "report.json").read_text())
        serial.pop("timing"), par.pop("timing")
        assert serial["experiments"] == par["experiments"]


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "fiolab.cli", "list"], capture_output=True, text=True, cwd=ROOT)
    assert out.returncode == 0 and "residue" in out.stdout


def test_bundled_configs_parse():
    for name in ("quick.yaml", "full.yaml"):
        assert load_config(ROOT / "configs" / name)
