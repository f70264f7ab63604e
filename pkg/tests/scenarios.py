"""Scripted hardware scenarios shared by the hw-sim tests and the acceptance suite."""

from __future__ import annotations

from calflow.hwsim import HwSimulator, IDLE_K, basic_controller, run_controller_hw
from conftest import load, topfilter_text

IN_KEY = "source.OUT->filter.IN"
OUT_KEY = "filter.OUT->sink.IN"


def filter_sim(param: int = 5, out_depth: int = 4096, **kw) -> HwSimulator:
    g = load(topfilter_text(), "TopFilter", params={"param": param})
    return HwSimulator(g, ["filter"], depths={OUT_KEY: out_depth}, **kw)


def blocked_filter_evaluations() -> dict[str, list[int]]:
    """Filter holding one input token (guard true) in front of a full output queue:
    invoke, free the slot, invoke again.

    Returns the condition evaluations each controller spends per invocation until it
    has decided to fire t0.  The AM invocation goes on past the EXEC into the next
    selection round; those TESTs belong to the following decision and are excluded
    on both sides.
    """
    out: dict[str, list[int]] = {}
    for kind in ("am", "basic"):
        sim = filter_sim(out_depth=1)
        actor = sim.actors[0]
        sim.queues[IN_KEY].inject([9])
        q = sim.queues[OUT_KEY]
        q.inject([100])
        per = []
        for free in (False, True):
            if free:
                q.consume(1)
            if kind == "am":
                inv = run_controller_hw(actor)
                per.append(inv.tests if inv.tests_to_exec is None else inv.tests_to_exec)
            else:
                per.append(basic_controller(actor.am.actor, actor.inputs, actor.outputs, actor.state)[1])
        assert actor.state.firings["t0"] == 1
        out[kind] = per
    return out


def idleness_run(graph, seed: int) -> tuple[HwSimulator, list[int], int]:
    """Run ``graph`` entirely in hardware under a seeded schedule.

    Returns ``(sim, latencies, bound)`` where ``bound`` is ``IDLE_K`` times the number
    of triggers.
    """
    sim = HwSimulator(graph, seed=seed)
    sim.run()
    return sim, sim.idle_latencies, IDLE_K * sim.n_triggers


def random_assignment(rng, inst) -> dict[str, str]:
    """A uniformly drawn placement respecting forced software placements (not ``m``)."""
    return {a: rng.choice(inst.allowed(a)) for a in inst.actors}
