import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calflow.curves import DEFAULT_READ, Curve
from calflow.frontend import parse_program
from calflow.profiler import (
    BandwidthCurves, ProfileReport, measure_boundary_bandwidth, measure_fifo_bandwidth, profile_hardware,
    profile_software,
)
from conftest import load, quiet_host, topfilter_text
from netgen import network

SPIN = """
actor Spin(int ns, int n) ==> int OUT :
    external function spin(int ns) --> int end
    int x := 0;
    action ==> OUT:[spin(ns)] guard x < n do x := x + 1; end
end
actor Eat() int IN ==> : action IN:[t] ==> end end
actor Never() int IN ==> : action IN:[t] ==> guard t < 0 end end
network P() ==> :
entities
    fast = Spin(ns = 1000, n = 100);
    slow = Spin(ns = 21000, n = 100);
    e1 = Eat();
    e2 = Never();
structure
    fast.OUT --> e1.IN;
    slow.OUT --> e2.IN;
end
"""


def _spin(ns):
    end = time.perf_counter_ns() + ns
    while time.perf_counter_ns() < end:
        pass
    return 0


def _spin_graph():
    host = quiet_host()
    host.register("spin", _spin)
    return parse_program([("spin.cal", SPIN)], "P", host)


def test_software_timing_tracks_spin_cost():
    rep = profile_software(_spin_graph())
    assert rep.firings["fast"] == 100 and rep.tokens["fast.OUT->e1.IN"] == 100
    assert rep.exec_sw["fast"] >= 1000
    # a 20 us difference in body cost shows up as ~20 us per firing
    assert rep.exec_sw["slow"] - rep.exec_sw["fast"] == pytest.approx(20000, rel=0.25)


def test_actor_that_never_fires_is_absent():
    rep = profile_software(_spin_graph())
    assert "e2" in rep.absent and "e2" not in rep.exec_sw
    assert rep.firings["e2"] == 0


def test_topfilter_token_counts(topfilter):
    rep = profile_software(topfilter)
    assert rep.tokens["source.OUT->filter.IN"] == 4096
    assert rep.sw_only == ["sink"]
    assert profile_software(topfilter).tokens == rep.tokens  # reproducible counts


def test_software_profile_rejects_accelerator_plan(topfilter, mixed_plan):
    with pytest.raises(ValueError):
        profile_software(topfilter, mixed_plan)


def test_hardware_profile():
    g = load("actor A() int IN ==> int OUT : work: action IN:[t] ==> OUT:[t] end end\n"
             "actor S() ==> int OUT : int x := 0; action ==> OUT:[x] guard x < 10 do x := x + 1; end end\n"
             "network N() ==> : entities s = S(); a = A(); b = A(); structure s.OUT --> a.IN; a.OUT --> b.IN; end",
             "N")
    rep = profile_hardware(g, cost_table={"A.work": 3}, clock_mhz=100)
    assert rep.exec_hw == {"s": 2.0, "a": 3.0, "b": 3.0}
    assert rep.assumed_clock_mhz == 100
    assert rep.firings == {"s": 10, "a": 10, "b": 10}


def test_hardware_profile_skips_software_only(topfilter):
    rep = profile_hardware(topfilter)
    assert set(rep.exec_hw) == {"source", "filter"}


def test_fifo_curves():
    intra, inter, estimated = measure_fifo_bandwidth([1, 16, 256], repeats=2, cores=1)
    assert estimated
    assert all(t > 0 for t in intra.ns) and list(intra.ns) == sorted(intra.ns)
    assert inter.ns == tuple(3.0 * t for t in intra.ns)
    with pytest.raises(ValueError):
        measure_fifo_bandwidth([8])


def test_fifo_curves_two_threads():
    intra, inter, estimated = measure_fifo_bandwidth([1, 64], repeats=2, cores=2)
    assert not estimated and all(t > 0 for t in inter.ns)


def test_boundary_curves():
    syn = BandwidthCurves()
    assert measure_boundary_bandwidth([1, 2], synthetic=syn) == (syn.read, syn.write)
    r, w = measure_boundary_bandwidth([1, 64, 1024], repeats=1)
    assert list(r.ns) == sorted(r.ns) and list(w.ns) == sorted(w.ns)
    assert w(1024) > 0 and r(1024) > 0


def test_report_round_trip():
    rep = profile_software(network(1, "pipeline")).merge(profile_hardware(network(1, "pipeline")))
    again = ProfileReport.from_json(rep.to_json())
    assert again.to_dict() == rep.to_dict()
    assert set(again.exec_hw) == set(again.exec_sw)
    with pytest.raises(ValueError):
        ProfileReport.from_dict({"version": 99})
    with pytest.raises(ValueError):
        ProfileReport.from_dict({"exec_sw": {"a": -1}})


def test_curve_interpolation():
    c = Curve.from_points([(4, 40.0), (2, 10.0)])
    assert c.sizes == (2, 4)
    assert [c(0), c(1), c(2), c(3), c(4), c(6)] == [0.0, 5.0, 10.0, 25.0, 40.0, 70.0]
    assert Curve.from_dict(c.to_dict()) == c
    assert DEFAULT_READ(1) == pytest.approx(8000.6)
    with pytest.raises(ValueError):
        Curve((2, 2), (1.0, 1.0))
    with pytest.raises(ValueError):
        Curve((1,), (-1.0,))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 1000), st.floats(0, 1e6)), min_size=1, max_size=8,
                unique_by=lambda p: p[0]),
       st.floats(0, 2000))
def test_curve_is_nonnegative_and_passes_through_points(points, k):
    c = Curve.from_points(points)
    assert c(k) >= 0
    for s, t in points:
        assert c(s) == pytest.approx(t)
