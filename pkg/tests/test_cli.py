import json
import subprocess
import sys

import numpy as np
import pytest

from rmswafom import cli
from rmswafom.netcore import NetParams, enumerate_points, psi, random_full_rank_net, read_net, write_net
from rmswafom.verify import CheckResult


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def netfile(tmp_path):
    path = tmp_path / "p.net"
    write_net(random_full_rank_net(NetParams(2, 4, 16, 6), 0), path)
    return path


def test_int_expr():
    assert cli._int_expr("2^10") == 1024
    assert cli._int_expr("2**3") == 8
    assert cli._int_expr("17") == 17


def test_wafom_json(capsys, netfile):
    code, out, _ = run(capsys, "wafom", "--net", str(netfile), "--weight", "mu+h")
    assert code == 0
    doc = json.loads(out)
    assert set(doc) >= {"w", "lg_w", "method"}
    assert doc["method"] == "inversion"


def test_wafom_text_and_methods(capsys, netfile):
    c1, out1, _ = run(capsys, "wafom", "--net", str(netfile), "--text")
    c2, out2, _ = run(capsys, "wafom", "--net", str(netfile), "--method", "highprec")
    assert c1 == c2 == 0
    assert out1.startswith("w = ")
    lg = float(out1.splitlines()[1].split("=")[1])
    assert json.loads(out2)["lg_w"] == pytest.approx(lg, rel=1e-12)


def test_unknown_flag_exit_1(capsys, netfile):
    code, _, err = run(capsys, "wafom", "--net", str(netfile), "--bogus")
    assert code == 1 and "usage" in err
    code, _, _ = run(capsys, "nosuch")
    assert code == 1


def test_user_errors_exit_1(capsys, tmp_path, netfile):
    assert run(capsys, "wafom", "--net", str(tmp_path / "missing.net"))[0] == 1
    bad = tmp_path / "bad.net"
    bad.write_text("2 1 2 1\n1 0 1\n")
    assert run(capsys, "wafom", "--net", str(bad))[0] == 1
    assert run(capsys, "wafom", "--net", str(netfile), "--weight", "zzz")[0] == 1
    assert run(capsys, "search", "--params", "2,4,16")[0] == 1
    assert run(capsys, "integrate", "--net", str(netfile), "--fn", "f9")[0] == 1


def test_internal_error_exit_2(capsys, monkeypatch, netfile):
    def broken(*a, **k):
        raise AssertionError("invariant violated")
    monkeypatch.setattr(cli, "wafom", broken)
    code, _, err = run(capsys, "wafom", "--net", str(netfile))
    assert code == 2 and "internal" in err


def test_verify(capsys, monkeypatch):
    code, out, _ = run(capsys, "verify", "--cases", "5")
    assert code == 0
    assert out.count("PASS") == len(out.splitlines())
    import rmswafom.verify as v
    monkeypatch.setattr(v, "identity_suite", lambda *a: [CheckResult("x", 1.0, 0.5, 1)])
    code, out, _ = run(capsys, "verify")
    assert code == 2 and out.startswith("FAIL")


def test_integrate(capsys, netfile):
    code, out, _ = run(capsys, "integrate", "--net", str(netfile), "--fn", "f1", "--shifts", "2^5",
                       "--seed", "4", "--exact")
    assert code == 0
    doc = json.loads(out)
    assert doc["n_shifts"] == 32 and doc["seed"] == 4
    assert "exact_integral" in doc and "lg_abs_bias" in doc


def test_search_then_wafom_round_trip(capsys, tmp_path):
    out_net = tmp_path / "best.net"
    code, out, _ = run(capsys, "search", "--params", "2,4,16,6", "--steps", "300", "--seed", "2",
                       "--out", str(out_net))
    assert code == 0
    best = json.loads(out)["best_lg_w"]
    code, out, _ = run(capsys, "wafom", "--net", str(out_net))
    assert abs(json.loads(out)["lg_w"] - best) <= 1e-12


def test_search_checkpoint_resume(capsys, tmp_path):
    ck = tmp_path / "ck.json"
    args = ["search", "--params", "2,3,10,5", "--seed", "1", "--checkpoint", str(ck)]
    assert run(capsys, *args, "--steps", "100")[0] == 0
    _, resumed, _ = run(capsys, *args, "--steps", "200", "--resume")
    _, fresh, _ = run(capsys, "search", "--params", "2,3,10,5", "--seed", "1", "--steps", "200")
    assert json.loads(resumed)["best_lg_w"] == json.loads(fresh)["best_lg_w"]


def test_random_search(capsys):
    code, out, _ = run(capsys, "search", "--params", "2,4,16,6", "--random", "10")
    assert code == 0 and json.loads(out)["evaluations"] == 10


def test_gen_points(capsys, netfile):
    code, out, _ = run(capsys, "gen-points", "--net", str(netfile))
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "x1,x2,x3,x4"
    assert len(lines) == 1 + 2 ** 6
    pts = np.array([[float(v) for v in l.split(",")] for l in lines[1:]])
    assert np.array_equal(pts, psi(enumerate_points(read_net(netfile)), 2))
    _, shifted, _ = run(capsys, "gen-points", "--net", str(netfile), "--shift-seed", "5")
    assert shifted != out


def test_ingest_then_gen_points(capsys, tmp_path):
    # coordinate matrices C_i (n x m); point l has digit vector C_i (bits of l)
    rng = np.random.default_rng(0)
    n, m, s = 6, 3, 2
    C = rng.integers(0, 2, size=(s, n, m))
    while np.linalg.matrix_rank(C.reshape(s * n, m)) < m:
        C = rng.integers(0, 2, size=(s, n, m))
    src = tmp_path / "gen.txt"
    src.write_text("\n\n".join("\n".join(" ".join(map(str, r)) for r in Ci) for Ci in C) + "\n")
    out_net = tmp_path / "gen.net"
    code, out, _ = run(capsys, "ingest", "--in", str(src), "--out", str(out_net))
    assert code == 0 and json.loads(out)["rank"] == m
    _, csv_text, _ = run(capsys, "gen-points", "--net", str(out_net))
    pts = np.array([[float(v) for v in l.split(",")] for l in csv_text.splitlines()[1:]])
    for l in range(2 ** m):
        bits = np.array([(l >> k) & 1 for k in range(m)])
        digits = (C @ bits) % 2
        expect = (digits * 2.0 ** -np.arange(1, n + 1)).sum(axis=1)
        assert np.allclose(pts[l], expect, rtol=0, atol=0)


def test_scatter_and_compare(capsys, tmp_path, netfile):
    csv_path = tmp_path / "s.csv"
    code, _, err = run(capsys, "scatter", "--params", "2,4,16,6", "--nets", "4", "--shifts", "2^3",
                       "--fns", "f1,f7", "--out", str(csv_path))
    assert code == 0
    assert csv_path.read_text().splitlines()[0] == "net_id,lg_w,lg_e_f1,lg_e_f7"
    assert "corr" in err
    pattern = str(tmp_path / "ext_m{m}.net")
    write_net(random_full_rank_net(NetParams(2, 4, 16, 5), 3), pattern.format(m=5))
    code, out, _ = run(capsys, "compare", "--params", "2,4,16", "--m-min", "5", "--m-max", "6",
                       "--external-pattern", pattern, "--steps", "50", "--shifts", "4", "--fns", "f1")
    assert code == 0
    assert out.splitlines()[0].split() == ["quantity", "s", "m=5", "m=6"]


def test_config_file(capsys, tmp_path, netfile):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"shifts": "2^4", "seed": 8}))
    code, out, _ = run(capsys, "--config", str(cfg), "integrate", "--net", str(netfile), "--fn", "f3")
    doc = json.loads(out)
    assert code == 0 and doc["n_shifts"] == 16 and doc["seed"] == 8
    # flags beat the config file
    _, out, _ = run(capsys, "--config", str(cfg), "integrate", "--net", str(netfile), "--fn", "f3",
                    "--seed", "1")
    assert json.loads(out)["seed"] == 1
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(capsys, "--config", str(cfg), "integrate", "--net", str(netfile), "--fn", "f3")[0] == 1


def test_resolved_config_logged(capsys, netfile):
    code, _, err = run(capsys, "wafom", "--net", str(netfile))
    assert code == 0 and "resolved config" in err and '"subcommand": "wafom"' in err
    _, _, err = run(capsys, "-q", "wafom", "--net", str(netfile))
    assert "resolved config" not in err


def test_module_entry_point(netfile):
    proc = subprocess.run([sys.executable, "-m", "rmswafom", "wafom", "--net", str(netfile)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "lg_w" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "rmswafom", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1
