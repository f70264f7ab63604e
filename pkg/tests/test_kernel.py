import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calflow.errors import EvaluationError
from calflow.kernel import eval_condition, eval_scope, exec_transition, lcg_rand
from calflow.machine import build_siam
from calflow.runtime import RingChannel
from conftest import load, topfilter_text


def _lcg(x):
    # glibc-style constants, written out independently of the kernel
    return (x * 1103515245 + 12345) % 2**31


def chan(*tokens, cap=8):
    c = RingChannel(cap, intra=True)
    for t in tokens:
        c.push(t)
    return c


def contents(c):
    return [c.peek(i) for i in range(c.available())]


@pytest.fixture
def net5():
    return load(topfilter_text(), "TopFilter", params={"param": 5})


def _machine(graph, name):
    a = graph.actor(name)
    return build_siam(a), a.initial_state()


def test_rand_stub():
    for x in (0, 1, 4095, 2**31 - 1, 123456):
        assert lcg_rand(x) == _lcg(x)


def test_scope_binds_peeked_token(net5):
    am, st_ = _machine(net5, "filter")
    assert eval_scope(am, st_, am.state_of("11X"), {"IN": [7]}) == {"t": 7}


def test_scope_without_bindings(net5):
    am, st_ = _machine(net5, "filter")
    assert eval_scope(am, st_, am.state_of("0XX"), {"IN": []}) == {}
    g = load("actor A() ==> : action ==> end end\nnetwork N() ==> : entities a = A(); structure end", "N")
    am2, st2 = _machine(g, "a")
    assert eval_scope(am2, st2, 0, {}) == {}


def test_scope_reads_state_without_mutation(net5):
    am, st_ = _machine(net5, "source")
    st_.vars["x"] = 41
    ready = next(i for i, k in enumerate(am.states) if set(k) == {"1"})
    assert eval_scope(am, st_, ready, {}) == {"x": 41}
    assert st_.vars == {"x": 41}


def test_conditions(net5):
    am, st_ = _machine(net5, "filter")
    c_in, c_out, c_guard = am.conditions
    outs = {"OUT": chan(cap=1)}
    assert eval_condition(am, st_, c_guard, {"IN": chan(7)}, outs)
    assert not eval_condition(am, st_, c_guard, {"IN": chan(5)}, outs)
    assert not eval_condition(am, st_, c_in, {"IN": chan()}, outs)
    full = chan(1, cap=1)
    assert not eval_condition(am, st_, c_out, {"IN": chan(7)}, {"OUT": full})
    src = chan(7)
    eval_condition(am, st_, c_guard, {"IN": src}, outs)
    assert src.available() == 1  # peek only


def test_filter_t0_copies(net5):
    am, st_ = _machine(net5, "filter")
    i, o = chan(7, 9), chan()
    exec_transition(am, st_, 0, {"IN": i}, {"OUT": o})
    assert contents(i) == [9] and contents(o) == [7]
    assert st_.vars == {} and st_.firings["t0"] == 1


def test_filter_t1_swallows(net5):
    am, st_ = _machine(net5, "filter")
    i, o = chan(3), chan()
    exec_transition(am, st_, 1, {"IN": i}, {"OUT": o})
    assert contents(i) == [] and contents(o) == []


def test_source_last_step(net5):
    am, st_ = _machine(net5, "source")
    st_.vars["x"] = 4095
    o = chan()
    exec_transition(am, st_, 0, {}, {"OUT": o})
    assert contents(o) == [_lcg(4095)]
    assert st_.vars["x"] == 4096


def _single(actor_src, inst="a"):
    g = load(actor_src + f"\nnetwork N() ==> : entities {inst} = A(); structure end", "N")
    return _machine(g, inst)


def test_fault_names_actor_and_action_and_keeps_channels():
    am, st_ = _single("actor A() int IN ==> int OUT : quot: action IN:[t] ==> OUT:[100 / t] end end")
    i, o = chan(0), chan()
    with pytest.raises(EvaluationError) as e:
        exec_transition(am, st_, 0, {"IN": i}, {"OUT": o})
    assert e.value.actor == "a" and e.value.action == "quot"
    assert contents(i) == [0] and contents(o) == []


def test_index_fault():
    am, st_ = _single("actor A() int IN ==> int OUT : List(type: int, size = 3) l := [1, 2, 3];\n"
                      "action IN:[t] ==> OUT:[l[t]] end end")
    with pytest.raises(EvaluationError):
        exec_transition(am, st_, 0, {"IN": chan(5)}, {"OUT": chan()})


def _twos(v, w):
    v &= (1 << w) - 1
    return v - (1 << w) if v >> (w - 1) else v


@settings(max_examples=80, deadline=None)
@given(st.integers(-(2**20), 2**20), st.integers(-(2**20), 2**20), st.sampled_from([4, 8, 13, 16]))
def test_width_wrapping(a, b, w):
    am, st_ = _single(f"actor A() int IN ==> int({w}) OUT : int({w}) acc := 0;\n"
                      "action IN:[x, y] ==> OUT:[x * y + 1] do acc := acc + x; end end")
    o = chan()
    exec_transition(am, st_, 0, {"IN": chan(a, b)}, {"OUT": o})
    assert contents(o) == [_twos(a * b + 1, w)]
    assert st_.vars["acc"] == _twos(a, w)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=6), st.integers(-50, 50))
def test_transition_is_deterministic(tokens, s0):
    src = ("actor A() int IN ==> int OUT : int s := 0;\n"
           "action IN:[t] ==> OUT:[s * 2 - t] do s := s + t; if s > 100 then s := s - 7; end end end")
    runs = []
    for _ in range(2):
        am, st_ = _single(src)
        st_.vars["s"] = s0
        i, o = chan(*tokens), chan()
        while i.available():
            exec_transition(am, st_, 0, {"IN": i}, {"OUT": o})
        runs.append((contents(o), dict(st_.vars)))
    assert runs[0] == runs[1]
    # independent re-statement of the action
    s, out = s0, []
    for t in tokens:
        out.append(s * 2 - t)
        s += t
        if s > 100:
            s -= 7
    assert runs[0] == (out, {"s": s})
