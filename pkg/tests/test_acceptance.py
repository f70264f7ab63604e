"""Acceptance criteria 1-10.

Each test prints one ``PASS``/``FAIL`` line; the lines are repeated in the
pytest terminal summary.  Run alone with ``pytest tests/test_acceptance.py``.
"""

import hashlib
import os
import random
import re
import threading
import time
import warnings

import pytest

from calflow.curves import Curve
from calflow.frontend import parse_program, parse_xcf
from calflow.frontend.xcf import PartitionPlan
from calflow.machine import build_siam
from calflow.partitioner import (
    brute_force, emit_lp, evaluate_assignment, evaluate_lp, instance_from_tables, parse_lp, solve_exact,
)
from calflow.partitioner.lp import fix_assignment
from calflow.partitioner.synthetic import random_instance
from calflow.plink import transfer_time_read, transfer_time_write
from calflow.profiler import BandwidthCurves
from calflow.runtime import RingChannel, RunOptions, run_network, run_reference
from calflow.runtime.channel import DeferredVisibilityError
from conftest import GOLDEN, topfilter_xcf_text, load, quiet_host, topfilter_text
from make_goldens import CASES, render, source
from netgen import SHAPES, network, random_plan
from scenarios import blocked_filter_evaluations, idleness_run, random_assignment

LINES: list[str] = []


def verdict(n: int, ok: bool, detail: str, soft: bool = False) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    if soft and not ok:
        line += " [soft: reported as a warning]"
    LINES.append(line)
    print(line)
    if soft:
        if not ok:
            warnings.warn(line)
        return
    assert ok, line


# 1 -----------------------------------------------------------------------------------------


def _lcg(x):
    return (1103515245 * x + 12345) & 0x7FFFFFFF


def test_criterion_1_topfilter_end_to_end():
    t0 = time.perf_counter()
    g = load(topfilter_text(), "TopFilter")
    single = run_network(g, options=RunOptions(trace=True))
    elapsed = time.perf_counter() - t0
    mixed = run_network(g, parse_xcf(topfilter_xcf_text(), g), options=RunOptions(trace=True))
    ref = run_reference(load(topfilter_text(), "TopFilter"))
    want = [v for v in map(_lcg, range(4096)) if v > 2**30]
    key = "filter.OUT->sink.IN"
    ok = (single.traces[key] == ref.traces[key] == want and mixed.traces[key] == want
          and single.status == mixed.status == "quiescent" and elapsed < 5.0)
    verdict(1, ok, f"sink trace {len(single.traces[key])} tokens equals reference; "
                   f"compile+run {elapsed:.2f} s (< 5 s); mixed source+filter-on-accelerator run identical")


# 2 -----------------------------------------------------------------------------------------


def test_criterion_2_cross_partition_traces():
    t0 = time.perf_counter()
    plans = mismatches = with_accel = 0
    nets = set()
    threads = set()
    for i in range(60):
        shape = SHAPES[i % len(SHAPES)]
        seed = i // len(SHAPES)
        g = network(seed, shape)
        nets.add((seed, shape))
        base = run_network(g, options=RunOptions(trace=True)).traces
        plan = random_plan(random.Random(1000 + i), g, max_threads=4, accel=None)
        r = run_network(g, plan, options=RunOptions(trace=True, check_publication=True, seed=i))
        plans += 1
        with_accel += plan.accelerator is not None
        threads.add(len(plan.software))
        mismatches += r.traces != base
    elapsed = time.perf_counter() - t0
    ok = plans >= 50 and len(nets) >= 5 and mismatches == 0 and elapsed < 120 and 0 < with_accel < plans
    verdict(2, ok, f"{plans} plans ({with_accel} with accelerator, threads {sorted(threads)}) over "
                   f"{len(nets)} networks, {mismatches} trace mismatches, {elapsed:.1f} s")


# 3 -----------------------------------------------------------------------------------------


def test_criterion_3_idleness():
    graphs = {}
    refs = {}
    unsafe = late = wrong = 0
    worst = 0.0
    for seed in range(1000):
        key = (seed % 50, SHAPES[seed % len(SHAPES)])
        if key not in graphs:
            graphs[key] = network(*key)
            refs[key] = run_reference(graphs[key]).traces
        sim, lat, bound = idleness_run(graphs[key], seed)
        unsafe += bool(sim.safety_violations)
        late += max(lat) > bound
        wrong += sim.report().traces != refs[key]
        worst = max(worst, max(lat) / bound)
    ok = unsafe == late == wrong == 0
    verdict(3, ok, f"1000 seeded schedules: {unsafe} early declarations, {late} late declarations "
                   f"(worst latency {worst:.2f} of K*|triggers|), {wrong} trace mismatches")


# 4 -----------------------------------------------------------------------------------------


def test_criterion_4_siam_efficiency():
    counts = blocked_filter_evaluations()
    am, basic = sum(counts["am"]), sum(counts["basic"])
    verdict(4, am < basic, f"condition evaluations over two invocations: AM {counts['am']} = {am}, "
                           f"basic {counts['basic']} = {basic}")


# 5 -----------------------------------------------------------------------------------------


def test_criterion_5_tau():
    lin = Curve.affine(0, 10)
    sq = Curve.from_points([(k, k * k) for k in range(1, 9)])
    examples = [
        (transfer_time_write, 3, 4, lin, 30), (transfer_time_write, 10, 4, lin, 100),
        (transfer_time_write, 8, 4, lin, 80), (transfer_time_read, 0, 4, sq, 0),
        (transfer_time_read, 5, 5, sq, 25), (transfer_time_read, 7, 3, sq, 19),
    ]
    exact = all(f(n, b, xi) == want for f, n, b, xi, want in examples)
    rng = random.Random(5)
    bad = 0
    for _ in range(10**4):
        sizes = sorted(rng.sample(range(1, 5000), rng.randint(1, 6)))
        acc, ns = 0.0, []
        for _ in sizes:
            acc += rng.choice([0.0, rng.uniform(0, 1e4)])
            ns.append(acc)
        xi = Curve(tuple(sizes), tuple(ns))
        b, n = rng.randint(1, 4096), rng.randint(0, 20000)
        for f in (transfer_time_write, transfer_time_read):
            bad += f(n, b, xi) > f(n + 1, b, xi)
    verdict(5, exact and bad == 0, f"{len(examples)} hand-computed values exact; "
                                   f"{bad} monotonicity violations in 10^4 random triples")


# 6 -----------------------------------------------------------------------------------------


def test_criterion_6_encoder_consistency():
    rng = random.Random(6)
    worst = 0.0
    checked = 0
    for _ in range(100):
        inst = random_instance(rng, rng.randint(1, 6), rng.randint(1, 3), rng.random() < 0.7,
                               m=rng.choice([None, None, 4]))
        text = emit_lp(inst)
        prob = parse_lp(text)
        done = 0
        while done < 100:
            asg = random_assignment(rng, inst)
            try:
                want = evaluate_assignment(inst, asg).T_exec
            except Exception:
                continue  # over the crossing bound: not feasible
            got = evaluate_lp(prob, fix_assignment(text, asg))
            worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
            done += 1
        checked += done
    verdict(6, worst <= 1e-9, f"{checked} fixed points over 100 instances, worst relative error {worst:.1e}")


# 7 -----------------------------------------------------------------------------------------


def _pairs_instance():
    actors = ["a", "b", "c", "d"]
    heavy = [("a", "b", 5000, 64), ("b", "a", 5000, 64), ("c", "d", 5000, 64), ("d", "c", 5000, 64)]
    flat = Curve.affine(0, 0)
    curves = BandwidthCurves(read=flat, write=flat, intra=Curve.affine(0, 0.01), inter=Curve.affine(0, 40))
    return instance_from_tables(actors, dict.fromkeys(actors, 1000.0), None, heavy, curves, 2, use_accel=False)


def test_criterion_7_exactness():
    rng = random.Random(7)
    shapes = [(1, True), (2, True), (1, False), (2, False), (3, False)]
    mismatches = 0
    for i in range(25):
        threads, accel = shapes[i % len(shapes)]
        inst = random_instance(rng, rng.randint(2, 8), threads, accel, m=rng.choice([None, 2]))
        best, asg = brute_force(inst)
        sol = solve_exact(inst)
        mismatches += sol.predicted_ns != best or sol.assignment != asg
    curves = BandwidthCurves(read=Curve.affine(0, 0), write=Curve.affine(0, 0),
                             intra=Curve.affine(0, 0.01), inter=Curve.affine(0, 50))
    two = instance_from_tables(["a", "b"], {"a": 100.0, "b": 100.0}, None,
                               [("a", "b", 1000, 64), ("b", "a", 1000, 64)], curves, 2, use_accel=False)
    s2 = solve_exact(two)
    pairs = _pairs_instance()
    s4 = solve_exact(pairs)
    together = (s2.assignment["a"] == s2.assignment["b"] and s4.assignment["a"] == s4.assignment["b"]
                and s4.assignment["c"] == s4.assignment["d"] and s4.predicted_ns == brute_force(pairs)[0])
    verdict(7, mismatches == 0 and together,
            f"25 instances: {mismatches} differences from enumeration; heavy-traffic actors co-located: {together} "
            f"({s4.assignment})")


# 8 -----------------------------------------------------------------------------------------


def _ring_stress(total: int, cap: int, seed: int, threaded: bool = True) -> tuple[list, int]:
    """Producer and consumer bursts of random size over one channel.

    Threaded, each side runs on its own thread.  Otherwise a seeded coin picks
    which side takes its next burst, which exercises tiny capacities without
    paying for interpreter-lock handoffs.
    """
    c = RingChannel(cap, check=True)
    errors: list = []
    publications = [0, 0]

    def producer():
        rng = random.Random(seed)
        nxt = 0
        while nxt < total:
            c.refresh_reads()
            n = min(rng.randint(1, 2 * cap), c.space(), total - nxt)
            if n:
                c.push_many(range(nxt, nxt + n))
                nxt += n
                c.publish_writes()
                publications[0] += 1
            yield

    def consumer():
        rng = random.Random(seed + 1)
        nxt = 0
        while nxt < total:
            c.refresh_writes()
            n = min(rng.randint(1, 2 * cap), c.available())
            if n:
                if c.read_many(n) != list(range(nxt, nxt + n)):
                    raise AssertionError(f"order broken at token {nxt}")
                nxt += n
                c.publish_reads()
                publications[1] += 1
                if not 0 <= c.occupancy() <= cap:
                    raise AssertionError(f"occupancy {c.occupancy()} outside [0, {cap}]")
            yield

    def drive(gen):
        try:
            for _ in gen:
                if errors:
                    return
                time.sleep(0)
        except (AssertionError, DeferredVisibilityError) as e:
            errors.append(e)

    if threaded:
        ts = [threading.Thread(target=drive, args=(g,)) for g in (producer(), consumer())]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    else:
        coin = random.Random(seed + 2)
        live = [producer(), consumer()]
        try:
            while live:
                g = coin.choice(live)
                if next(g, StopIteration) is StopIteration:
                    live.remove(g)
        except (AssertionError, DeferredVisibilityError) as e:
            errors.append(e)
    if c.global_read != total:
        errors.append(f"only {c.global_read} of {total} tokens arrived")
    return errors, sum(publications)


def test_criterion_8_ring_stress():
    errors, pubs = _ring_stress(10**7, 4093, 8)
    for cap in (1, 2, 3, 7):
        e, p = _ring_stress(10**5, cap, 9 + cap, threaded=False)
        errors += e
        pubs += p
    verdict(8, not errors, f"10^7 tokens in random bursts across two threads plus 4 x 10^5 interleaved "
                           f"at capacities 1-7, {pubs} checked publications, errors: {errors[:3] or 'none'}")


# 9 -----------------------------------------------------------------------------------------

SPIN_PIPE = """
actor Head(int n) ==> int OUT :
    external function spin(int v) --> int end
    int x := 0;
    action ==> OUT:[spin(x)] guard x < n do x := x + 1; end
end
actor Stage() int IN ==> int OUT :
    external function spin(int v) --> int end
    action IN:[t] ==> OUT:[spin(t)] end
end
actor Tail() int IN ==> :
    external function spin(int v) --> int end
    int last := 0;
    action IN:[t] ==> do last := spin(t); end
end
network Pipe(int n) ==> :
entities
    s0 = Head(n = n); s1 = Stage(); s2 = Stage(); s3 = Tail();
structure
    s0.OUT --> s1.IN; s1.OUT --> s2.IN; s2.OUT --> s3.IN;
end
"""

_BLOCK = bytes(1 << 18)


def _spin(v):
    # hashlib drops the interpreter lock for large inputs, so this is real parallel work
    hashlib.sha256(_BLOCK).digest()
    return v


def _pipe(n):
    host = quiet_host()
    host.register("spin", _spin)
    return parse_program([("pipe.cal", SPIN_PIPE)], "Pipe", host, {"n": n})


def test_criterion_9_scaling_smoke():
    n = 300
    g = _pipe(n)
    one = run_network(g, options=RunOptions())
    plan = PartitionPlan.from_assignment({"s0": "p1", "s1": "p2", "s2": "p3", "s3": "p4"}, 4)
    four = run_network(_pipe(n), plan, options=RunOptions())
    assert one.firing_counts == four.firing_counts == {"s0": n, "s1": n, "s2": n, "s3": n}
    ratio = one.wall_time / four.wall_time
    cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    ok = ratio >= 1.5
    verdict(9, ok, f"4-thread/1-thread throughput {ratio:.2f}x on a {cores}-core host",
            soft=not ok and cores < 4)


# 10 ----------------------------------------------------------------------------------------


def test_criterion_10_codegen_goldens():
    mismatched = [f for case in CASES for f, text in render(case).items() if text != (GOLDEN / f).read_text()]
    counts_ok = True
    for case, (top, members, hams) in CASES.items():
        g = load(source(case), top)
        net = (GOLDEN / f"{case}.netlist").read_text()
        conns = [c for c in g.connections if c.src in members or c.dst in members]
        counts_ok &= len(re.findall(r"^  trigger ", net, re.M)) == len(members)
        counts_ok &= len(re.findall(r"^  fifo ", net, re.M)) == len(conns)
        for n in hams:
            ham = (GOLDEN / f"{case}_{n}.ham").read_text()
            am = build_siam(g.actor(n))
            counts_ok &= len(re.findall(r"^S\d+: //", ham, re.M)) == len(am.states)
            counts_ok &= len(re.findall(r"bool condition_\d+\(", ham)) == len(am.conditions)
            counts_ok &= len(re.findall(r"void transition_\d+\(", ham)) == len(g.actor(n).actions)
    files = sum(len(render(c)) for c in CASES)
    verdict(10, not mismatched and counts_ok,
            f"{files} golden files (Filter, Accum, Merge, 2 netlists), mismatches {mismatched or 'none'}, "
            f"structural counts match: {counts_ok}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
