import re

import pytest

from calflow.codegen import DEFAULT_DEPTH, emit_ham, emit_network, write_gen
from calflow.frontend.xcf import ChannelConfig
from conftest import GOLDEN, build_siam, load
from make_goldens import CASES, render, source


@pytest.mark.parametrize("case", sorted(CASES))
def test_goldens(case):
    for fname, text in render(case).items():
        assert text == (GOLDEN / fname).read_text(), fname


def test_filter_controller_shape(topfilter, filter_am):
    text = emit_ham(filter_am, topfilter.instances["filter"].decl)
    assert re.findall(r"bool (condition_\d+)\(", text) == ["condition_0", "condition_1", "condition_2"]
    assert re.findall(r"void (transition_\d+)\(", text) == ["transition_0", "transition_1"]
    assert "switch (program_counter)" in text
    assert {"RETURN_EXEC", "RETURN_WAIT"} <= set(re.findall(r"RETURN_\w+", text))
    for field in ("IN_count", "IN_size", "IN_peek", "OUT_count", "OUT_size"):
        assert field in text
    # one labelled block per controller state
    assert len(re.findall(r"^S\d+: //", text, re.M)) == len(filter_am.states) == 9


def test_hooks_without_declaration(filter_am):
    text = emit_ham(filter_am)
    assert "switch (program_counter)" in text
    assert emit_ham(filter_am) == text


def test_zero_action_actor():
    g = load("actor A() ==> : end\nnetwork N() ==> : entities a = A(); structure end", "N")
    text = emit_ham(build_siam(g.actor("a")), g.instances["a"].decl)
    assert "transition_" not in text and "condition_" not in text
    body = text.split("switch (program_counter)")[1]
    assert body.count("return RETURN_WAIT;") == 1 and "RETURN_EXEC;" not in body


def test_emit_is_deterministic(topfilter):
    a = emit_network(topfilter, ["filter"])
    b = emit_network(load(source("topfilter"), "TopFilter"), ["filter"])
    assert a == b


def _counts(text):
    return (len(re.findall(r"^  trigger ", text, re.M)), len(re.findall(r"^  fifo ", text, re.M)),
            len(re.findall(r"^  input_stage ", text, re.M)), len(re.findall(r"^  output_stage ", text, re.M)))


def test_structural_counts_match_partition():
    g = load(source("synthetic"), "Syn")
    for members in (["acc"], ["acc", "m"], ["s1", "acc", "m", "z"], list(g.instances)):
        text = emit_network(g, members)
        conns = [c for c in g.connections if c.src in members or c.dst in members]
        ins = sum(c.src not in members for c in conns)
        outs = sum(c.dst not in members for c in conns)
        assert _counts(text) == (len(members), len(conns), ins, outs)
        instances = [ln for ln in text.splitlines() if re.match(r"^  [A-Z]\w* \w+ \(", ln)]
        assert len(instances) == len(members)


def test_filter_partition(topfilter):
    assert _counts(emit_network(topfilter, ["filter"])) == (1, 2, 1, 1)


def test_empty_partition(topfilter):
    text = emit_network(topfilter, [])
    assert text.splitlines() == ["// netlist for network TopFilter", f"// default queue depth {DEFAULT_DEPTH}",
                                 "// actors 0, queues 0"]


def test_depths(topfilter):
    text = emit_network(topfilter, ["filter"], default_depth=77)
    assert text.count(".DEPTH(77)") == 2
    cfg = {"source.OUT->filter.IN": ChannelConfig(depth=12)}
    text = emit_network(topfilter, ["filter"], channels=cfg, default_depth=77)
    assert ".DEPTH(12)" in text and text.count(".DEPTH(77)") == 1
    syn = emit_network(load(source("synthetic"), "Syn"), ["acc", "m"])
    assert ".WIDTH(1)" in syn and ".DEPTH(16)" in syn


def test_write_gen(topfilter, tmp_path):
    paths = write_gen(topfilter, tmp_path, ["source", "filter"])
    assert [p.name for p in paths] == ["source.cpp-dialect", "filter.cpp-dialect", "network.netlist"]
    assert (tmp_path / "gen" / "network.netlist").read_text() == emit_network(topfilter, ["source", "filter"])
