import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calflow.curves import Curve
from calflow.frontend import PartitionPlan
from calflow.hwsim import HwSimulator
from calflow.plink import BoundaryBuffer, transfer_time_read, transfer_time_write
from calflow.runtime import RunOptions, run_network
from conftest import load, topfilter_text

ACCEL_FILTER = {"source": "p1", "filter": "accel", "sink": "p1"}


def lin10(k):
    return 10 * k


def sq(k):
    return k * k


@pytest.mark.parametrize("n, b, xi, want", [
    (3, 4, lin10, 30), (10, 4, lin10, 100), (8, 4, lin10, 80),
    (0, 5, sq, 0), (5, 5, sq, 25), (7, 3, sq, 19),
])
def test_tau_examples(n, b, xi, want):
    assert transfer_time_write(n, b, xi) == want
    assert transfer_time_read(n, b, xi) == want


def test_tau_rejects_bad_arguments():
    with pytest.raises(ValueError):
        transfer_time_write(-1, 4, lin10)
    with pytest.raises(ValueError):
        transfer_time_read(3, 0, lin10)


@st.composite
def curves(draw):
    sizes = sorted(draw(st.sets(st.integers(1, 200), min_size=1, max_size=6)))
    steps = draw(st.lists(st.floats(0, 1e4), min_size=len(sizes), max_size=len(sizes)))
    ns, acc = [], 0.0
    for s in steps:
        acc += s
        ns.append(acc)
    return Curve(tuple(sizes), tuple(ns))


@settings(max_examples=300, deadline=None)
@given(curves(), st.integers(1, 64), st.integers(0, 500))
def test_tau_monotone(xi, b, n):
    assert transfer_time_write(n, b, xi) <= transfer_time_write(n + 1, b, xi)
    assert transfer_time_read(n, b, xi) <= transfer_time_read(n + 1, b, xi)


def test_boundary_buffer():
    buf = BoundaryBuffer("k", "host->device", 3, 4)
    buf.extend([1, 2])
    assert buf.room == 1 and not buf.full
    buf.extend([3])
    assert buf.full and buf.take(2) == [1, 2] and buf.take() == [3]
    with pytest.raises(ValueError):
        BoundaryBuffer("k", "host->device", 0, 4)


def _short_topfilter(n, param=0):
    return load(topfilter_text().replace("x < 4096", f"x < {n}"), "TopFilter", params={"param": param})


def _plan():
    return PartitionPlan.from_assignment(ACCEL_FILTER, 1)


def test_ten_tokens_one_kernel_call():
    g = _short_topfilter(10)
    r = run_network(g, _plan(), options=RunOptions(trace=True))
    assert r.kernel_calls == 1
    assert r.token_counts == {"source.OUT->filter.IN": 10, "filter.OUT->sink.IN": 10}
    ops = [(t.op, t.tokens) for t in r.transfer_log]
    assert ops == [("write", 10), ("kernel-start", 0), ("read", 10)]


def test_transfer_log_uses_curves():
    g = _short_topfilter(10)
    r = run_network(g, _plan(), options=RunOptions())
    w, _, rd = r.transfer_log
    # default curves: 6000 + 0.5 k ns (write), 8000 + 0.6 k ns (read); 4-byte tokens
    assert w.ns == pytest.approx(6005.0) and w.bytes == 40
    assert rd.ns == pytest.approx(8006.0)


@pytest.mark.parametrize("buffer_bytes, calls", [(16, 1024), (4096, 5), (1 << 20, 2)])
def test_batches_preserve_order(topfilter, buffer_bytes, calls):
    base = run_network(topfilter, options=RunOptions(trace=True))
    r = run_network(topfilter, _plan(), options=RunOptions(trace=True, buffer_bytes=buffer_bytes))
    assert r.traces == base.traces
    assert r.kernel_calls == calls
    writes = [t for t in r.transfer_log if t.op == "write"]
    assert all(t.bytes <= max(buffer_bytes, 4) for t in writes)


def test_idle_link_makes_no_progress():
    g = _short_topfilter(0)
    r = run_network(g, _plan(), options=RunOptions())
    assert r.kernel_calls == 1  # the initial call only
    assert r.token_counts == {"source.OUT->filter.IN": 0, "filter.OUT->sink.IN": 0}


def test_link_never_blocks_its_thread(monkeypatch):
    text = topfilter_text().replace("x < 4096", "x < 50") + (
        "\nactor Count() ==> int OUT : int c := 0; action ==> OUT:[c] guard c < 30000 do c := c + 1; end end\n"
        "actor Echo() int IN ==> : external procedure println(int v) end action IN:[t] ==> do println(t); end end\n"
        "network Both() ==> : entities source = Source(); filter = Filter(param = 0); sink = Sink();\n"
        "  c = Count(); e = Echo();\n"
        "structure source.OUT --> filter.IN; filter.OUT --> sink.IN; c.OUT --> e.IN; end\n")
    seen = []
    g = load(text, "Both", sink=seen)
    slow = threading.Event()
    during = []
    real_run = HwSimulator.run

    def sleepy(self, limits=None):
        assert threading.current_thread().name == "calflow-plink"
        before = len(seen)
        time.sleep(0.2)
        during.append(len(seen) - before)
        slow.set()
        return real_run(self, limits)

    monkeypatch.setattr(HwSimulator, "run", sleepy)
    plan = PartitionPlan.from_assignment({**ACCEL_FILTER, "c": "p1", "e": "p1"}, 1)
    r = run_network(g, plan, options=RunOptions())
    assert slow.is_set()
    assert r.firing_counts["e"] == 30000
    assert max(during) > 0  # p1 kept firing while the kernel ran


def test_simulator_timeout_propagates(topfilter):
    from calflow.errors import SimulationTimeout
    with pytest.raises(SimulationTimeout):
        run_network(topfilter, _plan(), options=RunOptions(cycle_budget=100))


def test_tau_rounding_keeps_order():
    # 5c + c rounded twice can exceed 6c rounded once
    xi = Curve((1, 2), (3277.0762842808526, 3277.0762842808526))
    assert transfer_time_write(275, 46, xi) <= transfer_time_write(276, 46, xi)
