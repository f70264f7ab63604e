import csv
import json

import pytest

from calflow import cli
from calflow.bundle import Bundle
from calflow.frontend import parse_xcf
from conftest import topfilter_xcf_text, load, topfilter_text


@pytest.fixture
def files(tmp_path):
    cal = tmp_path / "topfilter.cal"
    cal.write_text(topfilter_text())
    xcf = tmp_path / "topfilter.xcf"
    xcf.write_text(topfilter_xcf_text())
    return tmp_path, str(cal), str(xcf)


def _trace(path):
    rows = [ln.split("\t") for ln in path.read_text().splitlines()]
    return {(k, int(i)): int(v) for k, i, v in rows}


def test_compile_writes_bundle(files, capsys):
    tmp, cal, _ = files
    out = tmp / "b.json"
    assert cli.main(["compile", cal, "--top", "TopFilter", "-o", str(out)]) == 0
    b = Bundle.from_json(out.read_text())
    assert sorted(b.controllers) == ["filter", "sink", "source"]
    assert "filter: Filter, 3 conditions, 9 states" in capsys.readouterr().out


def test_dump_controller(files, capsys, filter_am):
    _, cal, _ = files
    assert cli.main(["compile", cal, "--top", "TopFilter", "--dump-controller", "filter"]) == 0
    assert capsys.readouterr().out == filter_am.to_dot()
    assert cli.main(["compile", cal, "--top", "TopFilter", "--dump-controller", "nobody"]) == 1


def test_syntax_error_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.cal"
    bad.write_text("actor A() ==> :\n  action ==> ==> end\nend\n")
    assert cli.main(["compile", str(bad), "--top", "A"]) == 1
    assert "bad.cal:2:" in capsys.readouterr().err


def test_usage_errors(files, capsys):
    _, cal, _ = files
    assert cli.main([]) == 1
    assert cli.main(["compile", cal]) == 1  # no --top
    assert cli.main(["run", "/does/not/exist.json"]) == 1
    assert cli.main(["run", cal, "--top", "TopFilter", "--param", "oops"]) == 1
    assert cli.main(["explore", cal, "--top", "TopFilter", "--threads", "a..b"]) == 1
    assert cli.main(["--help"]) == 0


def test_internal_fault_exit_code(files, monkeypatch, capsys):
    import calflow.runtime

    def boom(*a, **k):
        raise RuntimeError("bug")

    monkeypatch.setattr(calflow.runtime, "run_network", boom)
    _, cal, _ = files
    assert cli.main(["run", cal, "--top", "TopFilter"]) == 2
    assert "internal error" in capsys.readouterr().err


def test_run_single_and_mixed_traces_agree(files, capfd):
    tmp, cal, xcf = files
    b = tmp / "b.json"
    assert cli.main(["compile", cal, "--top", "TopFilter", "-o", str(b)]) == 0
    t1, t2 = tmp / "single.tsv", tmp / "mixed.tsv"
    assert cli.main(["run", str(b), "--trace", str(t1), "--json"]) == 0
    out = capfd.readouterr().out
    summary = json.loads(out[out.index("{\n"):])
    assert summary["status"] == "quiescent" and summary["firings"]["sink"] == 2046
    assert summary["kernel_calls"] == 0
    assert cli.main(["run", str(b), "--xcf", xcf, "--trace", str(t2), "--seed", "3"]) == 0
    assert "kernel calls: 1" in capfd.readouterr().out
    assert _trace(t1) == _trace(t2)
    assert len(_trace(t1)) == 4096 + 2046


def test_run_with_param_override(files, capfd):
    _, cal, _ = files
    assert cli.main(["run", cal, "--top", "TopFilter", "--param", "param=2147483647", "--json"]) == 0
    out = capfd.readouterr().out
    assert json.loads(out[out.index("{\n"):])["firings"]["sink"] == 0


def test_profile_modes(files):
    tmp, cal, _ = files
    curves = tmp / "fifo.json"
    assert cli.main(["profile", "--mode", "fifo", "--sizes", "64,4096", "--repeats", "1", "-o", str(curves)]) == 0
    doc = json.loads(curves.read_text())
    assert all(len(doc[k]["sizes"]) == 2 and len(doc[k]["ns"]) == 2 for k in ("intra", "inter"))
    assert cli.main(["profile", "--mode", "fifo", "--sizes", "64"]) == 1
    prof = tmp / "prof.json"
    assert cli.main(["profile", cal, "--top", "TopFilter", "--curves", str(curves), "-o", str(prof)]) == 0
    rep = json.loads(prof.read_text())
    assert rep["curves"]["intra"] == doc["intra"]
    assert rep["tokens"]["source.OUT->filter.IN"] == 4096
    assert cli.main(["profile", "--mode", "hw"]) == 1


def test_partition(files, capfd):
    tmp, cal, _ = files
    prof = tmp / "prof.json"
    assert cli.main(["profile", cal, "--top", "TopFilter", "-o", str(prof)]) == 0
    out, lp, br = tmp / "plan.xcf", tmp / "model.lp", tmp / "breakdown.json"
    assert cli.main(["partition", cal, "--top", "TopFilter", "--profile", str(prof), "--threads", "2", "--accel",
                     "-o", str(out), "--lp", str(lp), "--breakdown", str(br)]) == 0
    plan = parse_xcf(out.read_text(), load(topfilter_text(), "TopFilter"))
    d = json.loads(br.read_text())
    assert d["status"] == "optimal" and d["breakdown"]["T_exec"] == d["predicted_ns"]
    assert not plan.on_accelerator("sink")
    assert lp.read_text().startswith("\\") and "Binaries" in lp.read_text()


def test_explore(files, capfd):
    tmp, cal, _ = files
    out = tmp / "dse"
    assert cli.main(["explore", cal, "--top", "TopFilter", "--threads", "1..2", "--accel", "both",
                     "--out", str(out)]) == 0
    with open(out / "summary.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) >= 4
    for r in rows:
        assert r["status"] == "optimal" and (out / r["xcf_path"].split("/")[-1]).exists()


def test_codegen(files, capsys):
    tmp, cal, xcf = files
    assert cli.main(["codegen", cal, "--top", "TopFilter", "--xcf", xcf, "--out", str(tmp)]) == 0
    names = sorted(p.name for p in (tmp / "gen").iterdir())
    assert names == ["filter.cpp-dialect", "network.netlist", "source.cpp-dialect"]
    assert cli.main(["codegen", cal, "--top", "TopFilter", "--instances", "ghost", "--out", str(tmp)]) == 1
