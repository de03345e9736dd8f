import csv
import io
import socket
import subprocess
import sys
import time

import pytest

from adaptrdf.cli import main
from adaptrdf.config import ClusterConfig, ConfigError, load_config, parse_config
from adaptrdf.datasets import ACADEMIC
from adaptrdf.service import parse_update_lines
from adaptrdf.terms import ParseError, serialize_triples

Q = "SELECT ?s WHERE { ?s memberOf ?d . ?d subOrgOf ?u }"


@pytest.fixture
def files(tmp_path):
    data = tmp_path / "academic.nt"
    data.write_text(serialize_triples(ACADEMIC), encoding="utf-8")
    q = tmp_path / "q.rq"
    q.write_text(Q + "\n", encoding="utf-8")
    wl = tmp_path / "wl.rq"
    wl.write_text("\n---\n".join([Q] * 6) + "\n", encoding="utf-8")
    up = tmp_path / "up.txt"
    up.write_text("# change\n- Ben memberOf Stanford-CS .\n+ Amy memberOf MIT-CS .\n", encoding="utf-8")
    return {"data": str(data), "q": str(q), "wl": str(wl), "up": str(up), "dir": tmp_path}


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_load_prints_counts_and_stats(files, capsys):
    code, out, _ = cli(capsys, "--inproc", "2", "load", files["data"])
    assert code == 0
    assert out.startswith("loaded 15 triples on 2 workers: 8 7")
    assert any(line.startswith("worksFor\t") for line in out.splitlines())


def test_query_output_is_deterministic(files, capsys):
    runs = [cli(capsys, "--inproc", "2", "--data", files["data"], "query", files["q"]) for _ in range(2)]
    assert runs[0][0] == 0 and runs[0][1] == runs[1][1]
    out = runs[0][1]
    assert "mode=semijoin\trows=4" in out
    assert "Ben\n" in out and "wall_ms" in runs[0][2]


def test_workload_flips_to_parallel_after_threshold(files, capsys):
    out_csv = files["dir"] / "wl.csv"
    code, _, _ = cli(capsys, "--inproc", "2", "--data", files["data"], "workload", files["wl"], "--out", str(out_csv))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out_csv.read_text())))
    assert [r["mode"] for r in rows] == ["semijoin"] * 3 + ["parallel"] * 3
    assert float(rows[3]["replication_ratio"]) > 0
    assert list(rows[0]) == ["query_seq", "mode", "wall_ms", "cumulative_ms", "replication_ratio", "remote_bytes"]


def test_update_and_metrics(files, capsys):
    code, out, _ = cli(capsys, "--inproc", "2", "--data", files["data"], "update", files["up"])
    assert code == 0 and out.startswith("inserted 1 deleted 1")
    code, out, _ = cli(capsys, "--inproc", "3", "--data", files["data"], "metrics")
    assert code == 0 and "gini_main" in out and "LOAD_TRIPLES" in out


def test_stats_command(files, capsys):
    code, out, _ = cli(capsys, "--inproc", "2", "--data", files["data"], "stats")
    assert code == 0 and out.startswith("holding 15 triples on 2 workers")
    type_line = next(line for line in out.splitlines() if line.startswith("type\t"))
    assert type_line.endswith("-inf\t-inf")


def test_errors_exit_nonzero(files, capsys, tmp_path):
    bad = tmp_path / "bad.rq"
    bad.write_text("SELECT ?x WHERE { ?x p }", encoding="utf-8")
    code, _, err = cli(capsys, "--inproc", "2", "--data", files["data"], "query", str(bad))
    assert code == 1 and "error" in err
    code, _, err = cli(capsys, "--inproc", "2", "load", str(tmp_path / "missing.nt"))
    assert code == 1
    code, _, err = cli(capsys, "--master", "127.0.0.1:1", "--timeout", "1", "metrics")
    assert code == 1


def test_update_line_parsing():
    assert parse_update_lines("+ a b c .\n\n- d e f\n") == [("+", ("a", "b", "c")), ("-", ("d", "e", "f"))]
    with pytest.raises(ParseError):
        parse_update_lines("* a b c .")


def test_config_file_and_overrides(tmp_path):
    pins = tmp_path / "pins.txt"
    pins.write_text("Stanford* 1\n", encoding="utf-8")
    cfg_file = tmp_path / "c.conf"
    cfg_file.write_text(f"workers = 4  # four\nfreq_threshold=2\nrho_max = 0.5\nhash_pin_file = {pins}\n", encoding="utf-8")
    cfg = load_config(cfg_file, {"seed": 9, "timeout": None})
    assert (cfg.workers, cfg.seed, cfg.timeout) == (4, 9, 60.0)
    assert cfg.pins == {"Stanford*": 1}
    assert cfg.adaptivity.freq_threshold == 2 and cfg.adaptivity.rho_max == 0.5
    assert parse_config("# only a comment\n") == {}
    for text in ["workers", "colour = blue", "workers = many", "workers = 0", "transport = udp"]:
        cfg_file.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(cfg_file)
    assert ClusterConfig().transport == "inproc"


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_tcp_processes_end_to_end(files):
    port = free_port()
    py = [sys.executable, "-m", "adaptrdf.cli"]
    procs = [subprocess.Popen(py + ["serve", "--role", "master", "--workers", "2", "--host", "127.0.0.1", "--port", str(port)])]
    try:
        time.sleep(0.5)
        for i in range(2):
            procs.append(subprocess.Popen(py + ["serve", "--role", "worker", "--id", str(i), "--master", f"127.0.0.1:{port}"]))
        master = ["--master", f"127.0.0.1:{port}", "--timeout", "20"]
        run = lambda *a: subprocess.run(py + master + list(a), capture_output=True, text=True, timeout=60)
        assert run("load", files["data"]).returncode == 0
        res = run("query", files["q"])
        assert res.returncode == 0 and "rows=4" in res.stdout
        wl = run("workload", files["wl"])
        assert [r["mode"] for r in csv.DictReader(io.StringIO(wl.stdout))][-1] == "parallel"
        assert run("update", files["up"]).returncode == 0
        assert run("stats").stdout.startswith("holding 15 triples")
        assert run("shutdown").returncode == 0
        for p in procs:
            assert p.wait(timeout=20) == 0
    finally:
        for p in procs:
            if p.poll() is None:
                p.kill()
