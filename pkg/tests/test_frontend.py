import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calflow.errors import CalSemanticError, CalSyntaxError, XcfError
from calflow.frontend import Partition, PartitionPlan, emit_xcf, parse_source, parse_xcf
from calflow.frontend.types import BoolType, IntType, ListType, parse_type_name, token_bytes
from calflow.frontend.xcf import ACCELERATOR, SOFTWARE, ChannelConfig
from conftest import topfilter_xcf_text, load, topfilter_text

ACTORS_AB = "actor A() ==> int OUT : end\nactor B() int IN ==> : end\n"


def test_topfilter_instances_and_connections(topfilter):
    assert list(topfilter.instances) == ["source", "filter", "sink"]
    assert [c.key for c in topfilter.connections] == ["source.OUT->filter.IN", "filter.OUT->sink.IN"]
    assert topfilter.actor("filter").params == {"param": 1 << 30}


def test_network_param_override():
    g = load(topfilter_text(), "TopFilter", params={"param": 5})
    assert g.actor("filter").params["param"] == 5


def test_empty_network():
    g = load("network N() ==> : end", "N")
    assert g.instances == {} and g.connections == []


def test_width_mismatch():
    src = "actor A() ==> int(16) OUT : end\nactor B() int(32) IN ==> : end\n"
    src += "network N() ==> : entities a = A(); b = B(); structure a.OUT --> b.IN; end"
    with pytest.raises(CalSemanticError, match="type mismatch"):
        load(src, "N")


def test_syntax_error_position():
    with pytest.raises(CalSyntaxError) as e:
        load("actor A() ==> :\n  action ==> OUT:[1 +] end end", "N")
    assert (e.value.line, e.value.col) == (2, 22)
    assert "test.cal:2:22" in str(e.value)


@pytest.mark.parametrize("text, msg", [
    ("actor A() int IN ==> : x: action IN:[t] ==> end y: action IN:[t] ==> end "
     "priority x > y; y > x; end end\nnetwork N() ==> : entities a = A(); structure end", "cyclic priority"),
    ("network N() ==> : entities a = Q(); structure end", "unknown actor"),
    (ACTORS_AB + "network N() ==> : entities a = A(); b = B(); structure a.OUT --> b.FOO; end", "no input port"),
    ("actor A(int k) ==> : end\nnetwork N() ==> : entities a = A(k = 1, j = 2); structure end", "no parameter"),
    ("actor A(int k) ==> : end\nnetwork N() ==> : entities a = A(); structure end", "arity"),
    (ACTORS_AB + "network N() ==> : entities a = A(); c = A(); b = B(); "
     "structure a.OUT --> b.IN; c.OUT --> b.IN; end", "more than one incoming"),
    ("actor A() int IN ==> : x: action IN:[t] ==> end priority x > zz; end end\n"
     "network N() ==> : entities a = A(); structure end", "unknown action"),
    ("actor A() int IN, int IN ==> : end\nnetwork N() ==> : entities a = A(); structure end", "duplicate input"),
    ("actor A() ==> : end\nnetwork N() int X ==> : entities a = A(); structure end", "closed"),
])
def test_semantic_errors(text, msg):
    with pytest.raises(CalSemanticError, match=msg):
        load(text, "N")


def test_connection_depth_attribute():
    src = ACTORS_AB + "network N() ==> : entities a = A(); b = B(); structure a.OUT --> b.IN { bufferSize = 7; }; end"
    assert load(src, "N").connections[0].depth == 7


def test_parsing_is_deterministic():
    a, b = parse_source(topfilter_text()), parse_source(topfilter_text())
    assert a == b


def test_flattening_preserves_connection_count():
    unit = parse_source(topfilter_text())
    net = unit.networks[0]
    assert len(load(topfilter_text(), "TopFilter").connections) == len(net.connections)


def test_types():
    assert IntType(16).wrap(40000) == 40000 - 65536
    assert IntType(8, signed=False).wrap(-1) == 255
    assert token_bytes(IntType(17)) == 4
    assert token_bytes(ListType(IntType(8), 3)) == 3
    for t in (IntType(5), IntType(64, False), BoolType(), ListType(IntType(3), 4)):
        assert parse_type_name(str(t)) == t
    with pytest.raises(ValueError):
        IntType(65)


# -- XCF ----------------------------------------------------------------------------


def test_mixed_plan(topfilter, mixed_plan):
    assert mixed_plan.accelerator.members == ("source", "filter")
    assert [p.members for p in mixed_plan.software] == [("sink",)]
    assert mixed_plan.assignment() == {"sink": "p1", "source": "accel", "filter": "accel"}


def test_mixed_plan_round_trip(mixed_plan, topfilter):
    again = parse_xcf(emit_xcf(mixed_plan), topfilter)
    assert again == mixed_plan
    assert again.partitions[0].settings == mixed_plan.partitions[0].settings


def test_xcf_duplicate_instance(topfilter):
    doc = topfilter_xcf_text().replace('<instance id="sink"/>', '<instance id="sink"/><instance id="filter"/>')
    with pytest.raises(XcfError, match="both"):
        parse_xcf(doc, topfilter)


def test_xcf_unknown_instance(topfilter):
    with pytest.raises(XcfError, match="unknown instance"):
        parse_xcf(topfilter_xcf_text().replace('"sink"', '"nosuch"', 1), topfilter)


def test_xcf_malformed(topfilter):
    with pytest.raises(XcfError, match="malformed"):
        parse_xcf("<configuration><partitioning>", topfilter)


def test_xcf_omitting_everything_gives_single_thread(topfilter):
    plan = parse_xcf("<configuration/>", topfilter)
    assert plan.accelerator is None
    assert [p.members for p in plan.software] == [("source", "filter", "sink")]


def test_xcf_missing_instances_join_first_software_partition(topfilter):
    doc = topfilter_xcf_text().replace('<instance id="sink"/>', "")
    plan = parse_xcf(doc, topfilter)
    assert plan.software[0].members == ("sink",)


def test_empty_partition_round_trips():
    plan = PartitionPlan((Partition("0", SOFTWARE, ("a",), {}), Partition("1", SOFTWARE, (), {})))
    text = emit_xcf(plan)
    assert 'id="1"' in text
    assert parse_xcf(text) == plan


def test_plan_invariants():
    with pytest.raises(XcfError):
        PartitionPlan((Partition("0", ACCELERATOR, ("a",)), Partition("1", ACCELERATOR, ("b",))))
    with pytest.raises(XcfError):
        PartitionPlan((Partition("0", SOFTWARE, ("a",)),), {"a.X->b.Y": ChannelConfig(depth=0)})


names = st.lists(st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True), min_size=1, max_size=8, unique=True)


@st.composite
def plans(draw):
    insts = draw(names)
    n_sw = draw(st.integers(1, 4))
    accel = draw(st.booleans())
    slots = n_sw + accel
    where = [draw(st.integers(0, slots - 1)) for _ in insts]
    parts = []
    for k in range(slots):
        kind = ACCELERATOR if accel and k == slots - 1 else SOFTWARE
        members = tuple(a for a, w in zip(insts, where) if w == k)
        parts.append(Partition(str(k), kind, members, {}))
    chans = {}
    for a, b in zip(insts, insts[1:]):
        if draw(st.booleans()):
            chans[f"{a}.OUT->{b}.IN"] = ChannelConfig(draw(st.one_of(st.none(), st.integers(1, 1 << 16))),
                                                      draw(st.one_of(st.none(), st.integers(1, 1 << 22))))
    return PartitionPlan(tuple(parts), chans)


@settings(max_examples=100, deadline=None)
@given(plans())
def test_xcf_round_trip_property(plan):
    assert parse_xcf(emit_xcf(plan)) == plan
