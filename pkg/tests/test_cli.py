import csv
import io
import json
import subprocess
import sys

import pytest
import yaml

from rrcslice.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, ORACLE_HEADER, main
from rrcslice.errors import InvalidScenario
from rrcslice.scenario import bundled_scenario, dump_scenario, load_scenario, parse_scenario
from rrcslice.traffic import write_trace

BASE = {
    "schema_version": 1,
    "seed": 3,
    "duration_ms": 200_000,
    "slices": [{"rat": "NbIotCpOpt", "drx": {"n_c": 1, "n_on": 1}}],
    "ues": [{"ue_id": 1, "slice": 0,
             "traffic": [{"lambda_idt": "1/1000", "lambda_size": "1/600"}]}],
}


def write(tmp_path, doc, name="s.cfg"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


def cli(*argv):
    out = io.StringIO()
    return main([str(a) for a in argv], out), out.getvalue()


def test_run_writes_the_four_csvs(tmp_path):
    code, text = cli("run", "--scenario", write(tmp_path, BASE), "--out", tmp_path / "res")
    assert code == EXIT_OK and "windows simulated" in text
    names = sorted(p.name for p in (tmp_path / "res").iterdir())
    assert names == ["benchmark.csv", "decisions.csv", "metrics.csv", "run_meta.json",
                     "transcripts.csv"]
    meta = json.loads((tmp_path / "res" / "run_meta.json").read_text())
    assert meta["status"] == "complete" and meta["seed"] == 3
    assert meta["scenario"]["controller"]["hyper"]["alpha_lr"] == 0.1
    rows = list(csv.DictReader(open(tmp_path / "res" / "metrics.csv")))
    assert rows and int(rows[0]["window_index"]) == 0


def test_seed_override_and_determinism(tmp_path):
    s = write(tmp_path, BASE)
    for d in ("a", "b", "c"):
        extra = ["--seed", "9"] if d != "c" else []
        assert cli("run", "--scenario", s, "--out", tmp_path / d, "--quiet", *extra)[0] == 0
    for name in ("metrics.csv", "decisions.csv", "transcripts.csv"):
        a, b, c = ((tmp_path / d / name).read_bytes() for d in "abc")
        assert a == b
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "c" / "metrics.csv").read_bytes()


def test_validate_names_t_max(tmp_path, capsys):
    doc = dict(BASE, controller={"t_max_ms": 0})
    code, _ = cli("validate", "--scenario", write(tmp_path, doc))
    assert code == EXIT_INVALID
    assert "T_max" in capsys.readouterr().err


def test_missing_file_is_an_io_error(tmp_path, capsys):
    code, _ = cli("run", "--scenario", tmp_path / "nope.cfg", "--out", tmp_path / "o")
    assert code == EXIT_IO
    assert "nope.cfg" in capsys.readouterr().err


def test_bundled_scenario_validates():
    code, text = cli("validate", "--scenario", bundled_scenario())
    assert code == EXIT_OK and "1 UEs" in text
    sc = load_scenario(bundled_scenario())
    assert [p.lambda_idt for p in sc.ues[0].schedule] == [1 / 1000, 1 / 6000, 1 / 200]
    assert [p.lambda_size for p in sc.ues[0].schedule] == [1 / 600, 1 / 8000, 1 / 200]
    assert (sc.controller.lam, sc.controller.t_max) == (0.5, 300)


def test_oracle_on_a_trace(tmp_path):
    trace = tmp_path / "t.csv"
    write_trace(trace, {4: [(100 * k + 7 * (k % 5), 300) for k in range(30)]})
    code, _ = cli("oracle", "--scenario", write(tmp_path, BASE), "--trace", trace,
                  "--out", tmp_path / "o", "--quiet")
    assert code == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "o" / "oracle.csv")))
    assert tuple(rows[0]) == ORACLE_HEADER
    body = rows[1:]
    assert len(body) == 672
    assert sorted(int(r[1]) for r in body) == list(range(672))
    vals = [float(r[-1]) for r in body]
    assert vals == sorted(vals, reverse=True)
    assert [int(r[0]) for r in body] == list(range(1, 673))


def test_oracle_to_stdout(tmp_path):
    trace = tmp_path / "t.csv"
    write_trace(trace, {1: [(50 * k, 20) for k in range(20)]})
    code, text = cli("oracle", "--scenario", write(tmp_path, BASE), "--trace", trace)
    assert code == EXIT_OK and len(text.splitlines()) == 673


def test_oracle_unknown_ue(tmp_path):
    trace = tmp_path / "t.csv"
    write_trace(trace, {1: [(50 * k, 20) for k in range(20)]})
    code, _ = cli("oracle", "--scenario", write(tmp_path, BASE), "--trace", trace, "--ue", "2")
    assert code == EXIT_INVALID


def test_benchmark_command(tmp_path, monkeypatch):
    monkeypatch.setenv("CIOT_SIM_THREADS", "2")
    doc = dict(BASE, benchmark={"slice_counts": [1, 2], "repetitions": 30})
    code, text = cli("benchmark", "--scenario", write(tmp_path, doc), "--out", tmp_path / "b")
    assert code == EXIT_OK and "attach" in text.lower()
    rows = list(csv.DictReader(open(tmp_path / "b" / "benchmark.csv")))
    assert {r["table"] for r in rows} == {"attach", "procedures"}
    assert all(int(r["n"]) == 30 for r in rows)


BAD_DOCS = [
    ({"schema_version": 2}, "schema_version"),
    ({"seed": -1}, "seed"),
    ({"duration_ms": 0}, "duration_ms"),
    ({"mode": "fast"}, "mode"),
    ({"slices": [{"rat": "Wifi"}]}, "slices[0].rat"),
    ({"slices": [{"rat": "LteLike", "drx": {"n_c": 3, "n_on": 1}}]}, "slices[0].drx"),
    ({"ues": [{"ue_id": 1, "slice": 4, "traffic": [{"lambda_idt": 1, "lambda_size": 1}]}]},
     "ues[0].slice"),
    ({"ues": [{"ue_id": 1, "traffic": [{"lambda_idt": "x", "lambda_size": 1}]}]},
     "ues[0].traffic[0].lambda_idt"),
    ({"controller": {"lambda": 2}}, "controller.lambda"),
    ({"controller": {"hyper": {"gamma": 0}}}, "controller.hyper"),
    ({"controller": {"n_d": 0}}, "controller.n_d"),
    ({"commands": [{"at_ms": 5, "op": "delete"}]}, "commands[0].slice_id"),
    ({"mode": "bench", "benchmark": {"repetitions": 5}}, "benchmark.repetitions"),
    ({"colour": "red"}, "colour"),
]


@pytest.mark.parametrize("patch,field", BAD_DOCS)
def test_validate_and_run_reject_alike(tmp_path, patch, field, capsys):
    s = write(tmp_path, dict(BASE, **patch))
    with pytest.raises(InvalidScenario) as exc:
        load_scenario(s)
    assert exc.value.field == field
    assert cli("validate", "--scenario", s)[0] == EXIT_INVALID
    assert cli("run", "--scenario", s, "--out", tmp_path / "o")[0] == EXIT_INVALID
    assert field in capsys.readouterr().err


def test_dump_round_trip():
    sc = parse_scenario(BASE)
    again = parse_scenario(yaml.safe_load(dump_scenario(sc)))
    assert again.to_dict() == sc.to_dict()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rrcslice.cli", "validate", "--scenario",
                        str(write(tmp_path, BASE))], capture_output=True, text=True)
    assert r.returncode == 0 and "ok" in r.stdout
