"""Random model instances for testing the encoder and the solvers."""

from __future__ import annotations

import random

from calflow.curves import Curve
from calflow.partitioner.model import MilpInstance, instance_from_tables


def random_instance(rng: random.Random, n_actors: int, n_threads: int, use_accel: bool = True,
                    m: int | None = None, density: float = 0.4) -> MilpInstance:
    from calflow.profiler import BandwidthCurves

    actors = [f"a{i}" for i in range(n_actors)]
    exec_sw = {a: float(rng.randint(10, 1000)) for a in actors}
    exec_hw = {a: float(rng.randint(5, 2000)) for a in actors}
    sw_only = [a for a in actors if use_accel and rng.random() < 0.15]
    conns = []
    for s in actors:
        for t in actors:
            if s != t and rng.random() < density:
                conns.append((s, t, rng.randint(0, 5000), rng.choice([1, 16, 256, 4096])))

    def curve() -> Curve:
        sizes = sorted(rng.sample(range(1, 8192), 3))
        ns, acc = [], 0.0
        for _ in sizes:
            acc += rng.uniform(0.0, 500.0)
            ns.append(round(acc, 3))
        return Curve(tuple(sizes), tuple(ns))

    curves = BandwidthCurves(read=curve(), write=curve(), intra=curve(), inter=curve())
    return instance_from_tables(actors, exec_sw, exec_hw if use_accel else None, conns, curves, n_threads,
                                use_accel, clock_mhz=rng.choice([100.0, 250.0, 1000.0]), sw_only=sw_only, m=m)
