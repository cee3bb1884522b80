import csv
import io
import json
import random
import subprocess
import sys

import pytest

from cvarssp.cli import CSV_COLUMNS, main
from cvarssp.model import parse_model, serialize_model, validate_assumptions
from cvarssp.models import gen_fig4, geometric_chain, random_mdp
from cvarssp.policy import load_policy


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def geo(tmp_path):
    path = tmp_path / "geo.mdp"
    path.write_text(serialize_model(geometric_chain()))
    return str(path)


@pytest.fixture
def fig4(tmp_path):
    path = tmp_path / "fig4.mdp"
    path.write_text(serialize_model(gen_fig4(3)))
    return str(path)


@pytest.mark.parametrize("method", ["mc", "lp", "vi"])
def test_solve_geometric(geo, method):
    code, text = run("solve", "--model", geo, "--method", method, "--threshold", "0.25")
    assert code == 0
    doc = json.loads(text)
    assert doc["mode"] == "exact" and doc["expected_cost"] == "2"
    (rec,) = doc["results"]
    assert rec["threshold"] == "1/4" and rec["var"] == 2 and rec["cvar"] == "4" and rec["cvar_float"] == 4.0
    assert rec["engine"] == method and rec["wall_time"] >= 0


def test_solve_csv(fig4):
    code, text = run("solve", "--model", fig4, "--threshold", "0.5,0.15", "--output", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["1/2", "3/20"]
    assert rows[2][1:4] == ["4", "4", "vi"]


def test_float_mode(fig4):
    code, text = run("solve", "--model", fig4, "--threshold", "0.15", "--mode", "float", "--method", "lp")
    doc = json.loads(text)
    assert code == 0 and doc["mode"] == "float"
    assert abs(doc["results"][0]["cvar_float"] - 4) < 1e-9


def test_mc_rejects_mdp(fig4, capsys):
    code, _ = run("solve", "--model", fig4, "--method", "mc", "--threshold", "0.5")
    assert code == 2
    assert "model is not a Markov chain" in capsys.readouterr().err


def test_invalid_model_exit_two(tmp_path, capsys):
    path = tmp_path / "stuck.mdp"
    path.write_text("mdp\nstates 2\ninitial 0\ngoals 1\naction 0 stay 1\n  0:1\n")
    code, _ = run("solve", "--model", str(path), "--threshold", "0.5")
    assert code == 2
    assert "proper-policy" in capsys.readouterr().err


@pytest.mark.parametrize("threshold", ["1", "0", "abc"])
def test_bad_threshold_is_usage_error(geo, threshold):
    with pytest.raises(SystemExit) as info:
        run("solve", "--model", geo, "--threshold", threshold)
    assert info.value.code == 1


def test_flag_combinations(geo, tmp_path):
    assert run("solve", "--model", geo, "--method", "lp", "--threshold", "0.5", "--trace", str(tmp_path / "t.csv"))[0] == 1
    assert run("solve", "--model", geo, "--threshold", "0.5", "--export-lp", str(tmp_path))[0] == 1
    assert run("solve", "--model", str(tmp_path / "missing.mdp"), "--threshold", "0.5")[0] == 1


def test_parse_error_exit_one(tmp_path, capsys):
    path = tmp_path / "bad.mdp"
    path.write_text("mdp\nstates 2\ninitial 0\ngoals 1\naction 0 go 1\n  0:1/2 1:0.4\n")
    assert run("solve", "--model", str(path), "--threshold", "0.5")[0] == 1
    assert "line 5" in capsys.readouterr().err


def test_policy_out_and_audit(fig4, tmp_path):
    pol_path = tmp_path / "pol.txt"
    code, text = run("solve", "--model", fig4, "--method", "lp", "--threshold", "0.15",
                     "--policy-out", str(pol_path), "--audit", "20000", "--seed", "5")
    assert code == 0
    audit = json.loads(text)["results"][0]["audit"]
    assert audit["samples"] == 20000 and audit["seed"] == 5 and audit["censored"] == 0
    m = parse_model(open(fig4).read())
    pol = load_policy(m, pol_path.read_text())
    code, text = run("audit", "--model", fig4, "--policy", str(pol_path), "--threshold", "0.15", "--samples", "50000")
    doc = json.loads(text)
    assert code == 0 and doc["completed"] == 50000
    r = doc["results"][0]
    assert abs(r["cvar"] - 4) <= r["half_width"] + 1e-9
    assert pol.tail[m.initial] in (0, 1)


def test_policy_files_per_threshold(tmp_path):
    path = tmp_path / "m.mdp"
    path.write_text(serialize_model(gen_fig4(2)))
    base = tmp_path / "pol.txt"
    assert run("solve", "--model", str(path), "--threshold", "0.5,0.2", "--policy-out", str(base))[0] == 0
    assert (tmp_path / "pol_t0.txt").exists() and (tmp_path / "pol_t1.txt").exists()


def test_export_lp(geo, tmp_path):
    out_dir = tmp_path / "lps"
    assert run("solve", "--model", geo, "--method", "lp", "--threshold", "0.25", "--export-lp", str(out_dir))[0] == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert names == ["cvar_t0_n2.lp", "cvar_t0_n3.lp"]
    assert (out_dir / "cvar_t0_n2.lp").read_text().startswith("\\ threshold 1/4, VaR guess 2\n")


def test_trace(geo, tmp_path):
    trace = tmp_path / "trace.csv"
    assert run("solve", "--model", geo, "--threshold", "0.25", "--trace", str(trace))[0] == 0
    assert trace.read_text().splitlines()[0] == "n,v_0,v_1,c_1/4"


def test_audit_errors(geo, tmp_path):
    pol = tmp_path / "p.txt"
    pol.write_text("policy indexing=step length=0 states=5\ntail\n")
    assert run("audit", "--model", geo, "--policy", str(pol), "--threshold", "0.5")[0] == 1
    pol.write_text("policy indexing=step length=0 states=2\ntail\n0 go\n")
    with pytest.raises(SystemExit) as info:
        run("audit", "--model", geo, "--policy", str(pol), "--threshold", "0.5", "--samples", "0")
    assert info.value.code == 1


@pytest.mark.parametrize(
    "argv, check",
    [
        (["walk", "--n", "4"], lambda m: m.n_states == 17),
        (["fig4", "--k", "3"], lambda m: len(m.actions[m.initial]) == 2),
        (["fig2", "--n", "4"], lambda m: m.is_chain),
        (["fig2", "--n", "6", "--k", "2"], lambda m: not m.is_chain),
        (["grid", "--x", "4"], lambda m: m.n_states == 729),
        (["grid", "--x", "5", "--obstacles", "", "--janitor-facing", "E"], lambda m: m.n_states > 0),
    ],
)
def test_generate(argv, check, tmp_path, capsys):
    out = tmp_path / "m.mdp"
    code, _ = run("generate", *argv, "--out", str(out), "--check")
    assert code == 0
    assert "check: all assumptions hold" in capsys.readouterr().err
    m = parse_model(out.read_text())
    assert validate_assumptions(m).ok and check(m)


def test_generate_to_stdout():
    code, text = run("generate", "fig4", "--k", "1")
    assert code == 0 and text.startswith("mdp\n")


def test_generate_bad_spec(capsys):
    assert run("generate", "grid", "--start", "1,1")[0] == 1
    assert "start" in capsys.readouterr().err
    assert run("generate", "fig2", "--n", "4", "--k", "2")[0] == 1


def test_lp_and_vi_agree_on_corpus(tmp_path):
    rng = random.Random(99)
    for k in range(8):
        path = tmp_path / f"r{k}.mdp"
        path.write_text(serialize_model(random_mdp(rng)))
        lp = json.loads(run("solve", "--model", str(path), "--method", "lp", "--threshold", "0.5,0.1")[1])
        vi = json.loads(run("solve", "--model", str(path), "--method", "vi", "--threshold", "0.5,0.1")[1])
        for a, b in zip(lp["results"], vi["results"]):
            assert (a["var"], a["cvar"]) == (b["var"], b["cvar"])


def test_module_entry_point(geo):
    proc = subprocess.run([sys.executable, "-m", "cvarssp", "solve", "--model", geo, "--threshold", "0.5"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["results"][0]["cvar"] == "3"
