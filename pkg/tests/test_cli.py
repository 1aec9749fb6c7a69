import json
import os
import subprocess
import sys

import pytest

from aiid import cli, experiments
from aiid.config import ExperimentConfig, load_file, load_preset, parse_text, parse_value, preset_names
from aiid.errors import ValidationError

ENV_KEYS = ("AIID_CONFIG", "AIID_SEED", "AIID_OUT", "AIID_THREADS", "AIID_PRESET")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for k in ENV_KEYS:
        monkeypatch.delenv(k, raising=False)


def write(path, text):
    path.write_text(text)
    return str(path)


def read_summary(out, sub):
    with open(os.path.join(out, f"{sub}_summary.json")) as fh:
        return json.load(fh)


# ------------------------------------------------------------------ config


def test_parse_types():
    cfg = parse_text(
        """
        # comment line
        a: int = 0x10
        b: float = 2.5e-3   # trailing comment
        c: str = "hello"
        d: bool = yes
        e: vec = 1, 2 3
        f: ints = 4, 5
        g: strs = iid, paired
        h: mat = 1, 0; 0, 1
        """
    )
    assert cfg == {
        "a": 16,
        "b": 0.0025,
        "c": "hello",
        "d": True,
        "e": [1.0, 2.0, 3.0],
        "f": [4, 5],
        "g": ["iid", "paired"],
        "h": [[1.0, 0.0], [0.0, 1.0]],
    }


@pytest.mark.parametrize(
    "text",
    [
        "a = 1",
        "a: int = x",
        "a: float = one",
        "a: bool = maybe",
        "a: mat = 1, 2; 3",
        "a: complex = 1",
        "a: int = 1\na: int = 2",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ValidationError):
        parse_text(text)


def test_include_files(tmp_path):
    (tmp_path / "sub").mkdir()
    write(tmp_path / "sub" / "W.txt", "0.9 0.1\n# noise\n0.2 0.8\n")
    write(tmp_path / "p.txt", "0.25\n0.75\n")
    path = write(tmp_path / "exp.cfg", "W: mat = @sub/W.txt\np: vec = @p.txt\n")
    cfg = load_file(path)
    assert cfg["W"] == [[0.9, 0.1], [0.2, 0.8]]
    assert cfg["p"] == [0.25, 0.75]
    with pytest.raises(ValidationError):
        parse_value("vec", "@missing.txt", base_dir=str(tmp_path))
    with pytest.raises(ValidationError):
        load_file(str(tmp_path / "nope.cfg"))


def test_presets_all_resolve():
    names = preset_names()
    assert len(names) == 14
    for name in names:
        params = load_preset(name)
        sub = experiments.canonical_subcommand(params["subcommand"])
        P, _ = experiments.prepare(sub, {k: v for k, v in params.items() if k not in experiments.RESERVED})
        assert set(P) == set(experiments.SCHEMAS[sub])
    with pytest.raises(ValidationError):
        load_preset("no_such_preset")


def test_config_digest_ignores_out_and_threads():
    a = ExperimentConfig("run_code", {"r": 0.25}, 1, "x", 1)
    b = ExperimentConfig("run_code", {"r": 0.25}, 1, "y", 8)
    c = ExperimentConfig("run_code", {"r": 0.25}, 2, "x", 1)
    assert a.digest() == b.digest() != c.digest()


# --------------------------------------------------------------------- CLI

SMALL_CODE = """subcommand: str = run_code
ns: ints = 8, 12
trials: int = 300
processes: strs = iid, mixture
check_monotone: bool = false
"""


def test_code_run_outputs(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", SMALL_CODE)
    out = str(tmp_path / "out")
    rc = cli.main(["run_code", "--config", cfg, "--out", out, "--seed", "3"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "PASS" in printed
    with open(os.path.join(out, "run_code.csv")) as fh:
        header = fh.readline().strip().split(",")
        rows = fh.readlines()
    assert header == experiments.COLUMNS["run_code"]
    assert len(rows) == 4
    s = read_summary(out, "run_code")
    assert s["seed"] == 3 and s["pass"] is True and len(s["config_sha256"]) == 64
    with open(os.path.join(out, "run_code_transcript.jsonl")) as fh:
        first = json.loads(fh.readline())
    assert {"trial", "message", "decoded", "correct"} <= set(first)


def test_threads_bitwise_identical(tmp_path):
    cfg = write(tmp_path / "c.cfg", SMALL_CODE)
    blobs = []
    for th in ("1", "4"):
        out = tmp_path / f"o{th}"
        assert cli.main(["code", "--config", cfg, "--out", str(out), "--threads", th]) == 0
        blobs.append([(out / f).read_bytes() for f in ("run_code.csv", "run_code_summary.json", "run_code_transcript.jsonl")])
    assert blobs[0] == blobs[1]


def test_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path / "c.cfg", "subcommand: str = run_transport\nseed: int = 5\ntables: strs = gamma\nns: ints = 1, 2\n")
    out = str(tmp_path / "o")
    assert cli.main(["transport", "--config", cfg, "--out", out]) == 0
    assert read_summary(out, "run_transport")["seed"] == 5
    monkeypatch.setenv("AIID_SEED", "9")
    assert cli.main(["transport", "--config", cfg, "--out", out]) == 0
    assert read_summary(out, "run_transport")["seed"] == 9
    assert cli.main(["transport", "--config", cfg, "--out", out, "--seed", "11"]) == 0
    assert read_summary(out, "run_transport")["seed"] == 11
    # config and output directory from the environment
    monkeypatch.setenv("AIID_CONFIG", cfg)
    monkeypatch.setenv("AIID_OUT", str(tmp_path / "envout"))
    assert cli.main(["transport"]) == 0
    assert read_summary(str(tmp_path / "envout"), "run_transport")["params"]["ns"] == [1, 2]
    # a config file overrides the preset it is layered on
    monkeypatch.setenv("AIID_PRESET", "transport_gamma")
    assert cli.main(["transport"]) == 0
    assert read_summary(str(tmp_path / "envout"), "run_transport")["params"]["ns"] == [1, 2]


def test_validation_errors(tmp_path, capsys):
    out = str(tmp_path / "o")
    cfg = write(tmp_path / "bad.cfg", "subcommand: str = run_code\nbogus: int = 1\n")
    assert cli.main(["run_code", "--config", cfg, "--out", out]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "validation" and "bogus" in err["message"]
    assert os.path.exists(os.path.join(out, "run_code_error.json"))
    cases = [
        ("run_code", "subcommand: str = run_stein\n"),  # config written for another subcommand
        ("run_code", "W: mat = 0.5, 0.6; 0.5, 0.5\n"),
        ("run_code", "r: float = -1\n"),
        ("run_code", "ns: str = eight\n"),
        ("run_compress", "mode: str = quantum\nrho: mat = 1, 1; 1, 1\n"),
        ("run_stein", "p: vec = 0.5, 0.6\n"),
        ("run_stein", "mode: str = nonsense\n"),
    ]
    for sub, text in cases:
        cfg = write(tmp_path / "bad.cfg", text)
        assert cli.main([sub, "--config", cfg, "--out", out]) == 2, text
    assert cli.main(["run_code", "--preset", "nope", "--out", out]) == 2
    assert cli.main(["run_code", "--seed", "-1", "--out", out]) == 2
    assert cli.main(["run_code", "--threads", "0", "--out", out]) == 2


def test_threshold_failure_exit_code(tmp_path, capsys):
    cfg = write(
        tmp_path / "c.cfg",
        "subcommand: str = run_stein\nmode: str = sigma_tilde\nns: ints = 10, 100\ngap_max: float = 0.0001\n",
    )
    rc = cli.main(["stein", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out
    assert read_summary(str(tmp_path / "o"), "run_stein")["pass"] is False


def test_presets_listing_and_usage(capsys):
    assert cli.main(["presets"]) == 0
    assert "code_bsc" in capsys.readouterr().out.split()
    assert cli.main([]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "aiid", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("aiid ")
    r = subprocess.run(
        [sys.executable, "-m", "aiid", "run_transport", "--preset", "transport_club", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "run_transport.csv").exists()
