"""Execution-time model over partition assignments.

Partitions are the software threads ``p1..pn`` and, optionally, ``accel``.  The
plink actor lives on ``p1``.  With ``d[a][p]`` the placement booleans:

* ``T_p``      sum of ``exec(a, p)`` over actors on thread ``p``
* ``T_plink``  max of ``exec(a, accel)`` over accelerator actors, plus the
  write time of every host-to-device connection and the read time of every
  device-to-host connection
* ``T_intra``  max over threads of the transfer time of connections with both
  ends on that thread; ``p1`` also pays for connections between ``p1`` and the
  accelerator, which are copied through plink
* ``T_inter``  transfer time of connections between different threads, where
  ``p1`` and the accelerator count as one side

and ``T_exec = max(T_p..., T_plink) + T_intra + T_inter``.

All transfer times are constants per connection: token counts ``n`` and buffer
sizes ``b`` are data, so the curves are evaluated before solving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from calflow.curves import Curve
from calflow.errors import PartitionError
from calflow.plink import transfer_time_read, transfer_time_write

ACCEL = "accel"


def thread_names(n: int) -> list[str]:
    return [f"p{k}" for k in range(1, n + 1)]


def _tau(n: int, b: int, xi: Curve) -> float:
    # same batching rule as the boundary transfers
    return transfer_time_write(n, b, xi)


@dataclass(frozen=True)
class Link:
    key: str
    src: str
    dst: str
    n: int
    tau_w: float
    tau_r: float
    tau_intra: float
    tau_inter: float


@dataclass
class MilpInstance:
    actors: tuple[str, ...]
    n_threads: int
    use_accel: bool
    exec: dict[tuple[str, str], float]  # (actor, partition) -> total ns
    links: tuple[Link, ...]
    forbidden: frozenset[tuple[str, str]] = frozenset()
    m: int | None = None
    clock_mhz: float | None = None
    notes: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_threads < 1:
            raise PartitionError("need at least one thread")
        if len(set(self.actors)) != len(self.actors):
            raise PartitionError("duplicate actor names")
        for a in self.actors:
            for p in self.partitions:
                if (a, p) not in self.forbidden and (a, p) not in self.exec:
                    raise PartitionError(f"no execution time for actor {a!r} on {p}")
        known = set(self.actors)
        for ln in self.links:
            if ln.src not in known or ln.dst not in known:
                raise PartitionError(f"connection {ln.key} refers to an unknown actor")

    @property
    def threads(self) -> list[str]:
        return thread_names(self.n_threads)

    @property
    def partitions(self) -> list[str]:
        return self.threads + ([ACCEL] if self.use_accel else [])

    def allowed(self, actor: str) -> list[str]:
        return [p for p in self.partitions if (actor, p) not in self.forbidden]

    def scaled(self, k: float) -> "MilpInstance":
        """Every time multiplied by ``k``."""
        links = tuple(Link(ln.key, ln.src, ln.dst, ln.n, ln.tau_w * k, ln.tau_r * k, ln.tau_intra * k,
                           ln.tau_inter * k) for ln in self.links)
        return MilpInstance(self.actors, self.n_threads, self.use_accel,
                            {key: v * k for key, v in self.exec.items()}, links, self.forbidden, self.m,
                            self.clock_mhz, dict(self.notes))


@dataclass
class Breakdown:
    T_p: dict[str, float]
    T_hw: float
    T_write: float
    T_read: float
    t_intra: dict[str, float]
    t_plink_intra: float
    T_intra: float
    T_inter: float
    crossings: int

    @property
    def T_plink(self) -> float:
        return self.T_hw + self.T_read + self.T_write

    @property
    def T_exec(self) -> float:
        return max(list(self.T_p.values()) + [self.T_plink]) + self.T_intra + self.T_inter

    def to_dict(self) -> dict:
        return {
            "T_exec": self.T_exec, "T_p": dict(self.T_p), "T_plink": self.T_plink, "T_hw": self.T_hw,
            "T_write": self.T_write, "T_read": self.T_read, "t_intra": dict(self.t_intra),
            "t_plink_intra": self.t_plink_intra, "T_intra": self.T_intra, "T_inter": self.T_inter,
            "crossings": self.crossings,
        }


def evaluate_assignment(inst: MilpInstance, assignment: Mapping[str, str | None],
                        partial: bool = False) -> Breakdown:
    """Evaluate every term with the placement fixed.

    With ``partial=True`` unassigned actors (missing or ``None``) contribute
    nothing, which gives a lower bound on every completion.
    """
    parts = set(inst.partitions)
    for a in inst.actors:
        p = assignment.get(a)
        if p is None:
            if not partial:
                raise PartitionError(f"actor {a!r} is not assigned")
            continue
        if p not in parts:
            raise PartitionError(f"actor {a!r}: unknown partition {p!r}")
        if (a, p) in inst.forbidden:
            raise PartitionError(f"actor {a!r} may not be placed on {p}")
    T_p = {p: 0.0 for p in inst.threads}
    T_hw = 0.0
    for a in inst.actors:
        p = assignment.get(a)
        if p is None:
            continue
        if p == ACCEL:
            T_hw = max(T_hw, inst.exec[(a, p)])
        else:
            T_p[p] += inst.exec[(a, p)]
    T_write = T_read = 0.0
    t_intra = {p: 0.0 for p in inst.threads}
    t_plink = 0.0
    T_inter = 0.0
    crossings = 0
    for ln in inst.links:
        s, t = assignment.get(ln.src), assignment.get(ln.dst)
        if s is None or t is None:
            continue
        s_acc, t_acc = s == ACCEL, t == ACCEL
        if not s_acc and t_acc:
            T_write += ln.tau_w
            crossings += 1
        if s_acc and not t_acc:
            T_read += ln.tau_r
            crossings += 1
        if s == t and not s_acc:
            t_intra[s] += ln.tau_intra
        if (s == "p1" and t_acc) or (s_acc and t == "p1"):
            t_plink += ln.tau_intra
        # Inter-thread traffic.  Taken literally, the second double sum visits a
        # pair of non-p1 threads once per ordered pair, so such a connection is
        # charged twice; the p1/accelerator side is charged once.
        host_s = s in ("p1", ACCEL)
        host_t = t in ("p1", ACCEL)
        k = 0
        if host_s and not host_t:
            k += 1
        elif host_t and not host_s:
            k += 1
        elif not host_s and not host_t and s != t:
            k += 2
        T_inter += k * ln.tau_inter
    if "p1" in t_intra:
        per_thread = [t_intra[p] + (t_plink if p == "p1" else 0.0) for p in inst.threads]
    else:
        per_thread = [0.0]
    if inst.m is not None and crossings > inst.m and not partial:
        raise PartitionError(f"assignment has {crossings} boundary crossings, more than m={inst.m}")
    return Breakdown(T_p, T_hw, T_write, T_read, t_intra, t_plink, max(per_thread), T_inter, crossings)


def instance_from_tables(
    actors: Sequence[str],
    exec_sw: Mapping[str, float],
    exec_hw: Mapping[str, float] | None,
    connections: Sequence[tuple[str, str, int, int]],
    curves,
    n_threads: int,
    use_accel: bool = True,
    clock_mhz: float = 1000.0,
    sw_only: Sequence[str] = (),
    m: int | None = None,
    fifo_b: Mapping[int, int] | None = None,
) -> MilpInstance:
    """Instance from total times.

    ``exec_sw`` is ns per actor on any thread, ``exec_hw`` total cycles on the
    accelerator.  ``connections`` are ``(src, dst, n, b)``; ``b`` is used for the
    boundary transfers and, unless ``fifo_b`` overrides it by connection index,
    for the software FIFO terms too.
    """
    threads = thread_names(n_threads)
    ex: dict[tuple[str, str], float] = {}
    forbidden = set()
    for a in actors:
        if a not in exec_sw:
            raise PartitionError(f"missing software profile for actor {a!r}")
        for p in threads:
            ex[(a, p)] = float(exec_sw[a])
        if use_accel:
            if a in sw_only:
                forbidden.add((a, ACCEL))
            elif exec_hw is None or a not in exec_hw:
                raise PartitionError(f"missing hardware profile for actor {a!r}")
            else:
                ex[(a, ACCEL)] = float(exec_hw[a]) * 1000.0 / clock_mhz
    links = []
    for i, (s, t, n, b) in enumerate(connections):
        bf = fifo_b.get(i, b) if fifo_b else b
        links.append(Link(f"{s}->{t}#{i}", s, t, int(n),
                          transfer_time_write(n, b, curves.write), transfer_time_read(n, b, curves.read),
                          _tau(n, bf, curves.intra), _tau(n, bf, curves.inter)))
    return MilpInstance(tuple(actors), n_threads, use_accel, ex, tuple(links), frozenset(forbidden), m, clock_mhz,
                        {"ns_per_cycle": 1000.0 / clock_mhz})


def build_model(graph, profile, n_threads: int, use_accel: bool = True, m: int | None = None,
                buffer_bytes: int = 1 << 20, fifo_depth: int = 4096,
                channel_config: Mapping | None = None) -> MilpInstance:
    """Instance for a network from a profile report.

    Per-actor totals are average time per firing times firings.  ``b`` is the
    boundary buffer capacity in tokens for read/write terms and the FIFO depth
    for the software FIFO terms.
    """
    from calflow.frontend.types import token_bytes

    channel_config = channel_config or {}
    actors = list(graph.instances)
    sw_only = set(profile.sw_only) | {a for a in actors if graph.actor(a).software_only}
    absent = set(profile.absent)
    firings = profile.firings
    exec_sw: dict[str, float] = {}
    exec_hw: dict[str, float] = {}
    for a in actors:
        f = firings.get(a, 0)
        if a in profile.exec_sw:
            exec_sw[a] = profile.exec_sw[a] * f
        elif a in absent or f == 0:
            exec_sw[a] = 0.0
        if use_accel and a not in sw_only:
            if a in profile.exec_hw:
                exec_hw[a] = profile.exec_hw[a] * f
            elif a in absent or f == 0:
                exec_hw[a] = 0.0
    conns = []
    fifo_b = {}
    for i, c in enumerate(graph.connections):
        if c.key not in profile.tokens:
            raise PartitionError(f"missing token count for connection {c.key}")
        cfg = channel_config.get(c.key)
        nbytes = cfg.buffer_bytes if cfg is not None and cfg.buffer_bytes else buffer_bytes
        b = max(1, nbytes // token_bytes(c.type))
        depth = (cfg.depth if cfg is not None and cfg.depth else None) or c.depth or fifo_depth
        fifo_b[i] = depth
        conns.append((c.src, c.dst, profile.tokens[c.key], b))
    inst = instance_from_tables(actors, exec_sw, exec_hw, conns, profile.curves, n_threads, use_accel,
                                profile.assumed_clock_mhz, sorted(sw_only), m, fifo_b)
    inst.links = tuple(
        Link(c.key, ln.src, ln.dst, ln.n, ln.tau_w, ln.tau_r, ln.tau_intra, ln.tau_inter)
        for c, ln in zip(graph.connections, inst.links)
    )
    return inst
