"""Host side of the accelerator boundary.

``PLink`` is scheduled like any other actor on the first software thread.  It
moves tokens from host channels into host-to-device buffers, starts the
simulated kernel, and returns device-to-host tokens to the host channels.  The
simulator runs on one helper thread; requests and results travel through two
handoff queues, and the scheduler thread only ever polls for completion.

A kernel call is started when

* the run begins (so that accelerator-resident sources get to run),
* an input buffer is full,
* input buffers hold tokens and no new token arrived during this invocation,
* the previous call stopped with output tokens stuck behind full output buffers,
  or with stimulus still queued after having made progress.
"""

from __future__ import annotations

import queue
import threading
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

from calflow.curves import DEFAULT_READ, DEFAULT_WRITE, Curve
from calflow.frontend.types import token_bytes
from calflow.hwsim import HwSimulator, RunSummary

HOST_TO_DEVICE = "host->device"
DEVICE_TO_HOST = "device->host"


def _tau(n: int, b: int, xi: Callable[[int], float]) -> float:
    if n < 0 or b < 1:
        raise ValueError("need n >= 0 and b >= 1")
    if n == 0:
        return 0.0
    if n <= b:
        return xi(n)
    r = n % b
    # exact sum, one rounding: keeps tau nondecreasing in n in floating point too
    return float(Fraction(xi(b)) * (n // b) + Fraction(xi(r) if r else 0))


def transfer_time_write(n: int, b: int, xi_w: Callable[[int], float]) -> float:
    """Best-case time to write ``n`` tokens through a ``b``-token buffer."""
    return _tau(n, b, xi_w)


def transfer_time_read(n: int, b: int, xi_r: Callable[[int], float]) -> float:
    return _tau(n, b, xi_r)


class BoundaryBuffer:
    def __init__(self, key: str, direction: str, capacity: int, token_size: int):
        if capacity < 1:
            raise ValueError("boundary buffer capacity must be >= 1 token")
        self.key = key
        self.direction = direction
        self.capacity = capacity
        self.token_size = token_size
        self.tokens: deque = deque()

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def room(self) -> int:
        return self.capacity - len(self.tokens)

    @property
    def full(self) -> bool:
        return len(self.tokens) >= self.capacity

    def extend(self, toks) -> None:
        self.tokens.extend(toks)

    def take(self, n: int | None = None) -> list:
        n = len(self.tokens) if n is None else min(n, len(self.tokens))
        return [self.tokens.popleft() for _ in range(n)]


@dataclass(frozen=True)
class Transfer:
    key: str
    op: str  # write, read, kernel-start
    tokens: int
    bytes: int
    ns: float

    def to_dict(self) -> dict:
        return {"connection": self.key, "op": self.op, "tokens": self.tokens, "bytes": self.bytes, "ns": self.ns}


class TransferLog(list):
    def total_ns(self, op: str | None = None) -> float:
        return sum(t.ns for t in self if op is None or t.op == op)


class PLink:
    name = "plink"

    def __init__(self, graph, plan, machines, states, opts):
        accel = plan.accelerator
        depths = {k: c.depth for k, c in plan.channels.items() if c.depth is not None}
        self.sim = HwSimulator(
            graph, accel.members, machines, states,
            cost_table=opts.cost_table, fifo_depth=opts.hw_fifo_depth,
            cycle_budget=opts.cycle_budget, seed=opts.seed, depths=depths,
        )
        curves = opts.boundary_curves
        self.xi_w: Curve = curves.write if curves is not None else DEFAULT_WRITE
        self.xi_r: Curve = curves.read if curves is not None else DEFAULT_READ
        self.in_bufs: dict[str, BoundaryBuffer] = {}
        self.out_bufs: dict[str, BoundaryBuffer] = {}
        for key in self.sim.in_stages:
            self.in_bufs[key] = self._buffer(graph, plan, key, HOST_TO_DEVICE, opts.buffer_bytes)
        for key in self.sim.out_stages:
            self.out_bufs[key] = self._buffer(graph, plan, key, DEVICE_TO_HOST, opts.buffer_bytes)
        self.log = TransferLog()
        self.kernel_calls = 0
        self.flush_reasons: list[str] = []
        self.started = False
        self.in_flight = False
        self.last: RunSummary | None = None
        self._requests: queue.SimpleQueue = queue.SimpleQueue()
        self._results: queue.SimpleQueue = queue.SimpleQueue()
        self._helper: threading.Thread | None = None
        self.in_ch: dict = {}
        self.out_ch: dict = {}
        self.coord = None
        self.thread_index = 0

    @staticmethod
    def _buffer(graph, plan, key, direction, default_bytes) -> BoundaryBuffer:
        conn = graph.connection(key)
        size = token_bytes(conn.type)
        cfg = plan.channels.get(key)
        nbytes = cfg.buffer_bytes if cfg is not None and cfg.buffer_bytes else default_bytes
        return BoundaryBuffer(key, direction, max(1, nbytes // size), size)

    def attach(self, channels: dict, coord, thread_index: int = 0) -> None:
        self.in_ch = {k: channels[k] for k in self.in_bufs}
        self.out_ch = {k: channels[k] for k in self.out_bufs}
        self.coord = coord
        self.thread_index = thread_index

    # -- helper thread -------------------------------------------------------------------

    def _helper_loop(self) -> None:
        while True:
            req = self._requests.get()
            if req is None:
                return
            try:
                res: Any = self.sim.run(req)
            except BaseException as e:  # noqa: BLE001 - handed back to the scheduler thread
                res = e
            self._results.put(res)
            if self.coord is not None:
                self.coord.external_end(self.thread_index)

    def _start_kernel(self, reason: str) -> None:
        for key, buf in self.in_bufs.items():
            toks = buf.take()
            if toks:
                self.sim.feed(key, toks)
                self.log.append(Transfer(key, "write", len(toks), len(toks) * buf.token_size,
                                         transfer_time_write(len(toks), buf.capacity, self.xi_w)))
        limits = {k: b.room for k, b in self.out_bufs.items()}
        self.log.append(Transfer("", "kernel-start", 0, 0, 0.0))
        self.kernel_calls += 1
        self.flush_reasons.append(reason)
        self.started = True
        self.in_flight = True
        if self._helper is None:
            self._helper = threading.Thread(target=self._helper_loop, name="calflow-plink", daemon=True)
            self._helper.start()
        if self.coord is not None:
            self.coord.external_begin()
        self._requests.put(limits)

    def _poll(self) -> bool:
        try:
            res = self._results.get_nowait()
        except queue.Empty:
            return False
        self.in_flight = False
        if isinstance(res, BaseException):
            raise res
        self.last = res
        for key, buf in self.out_bufs.items():
            toks = self.sim.collect(key)
            if toks:
                buf.extend(toks)
                self.log.append(Transfer(key, "read", len(toks), len(toks) * buf.token_size,
                                         transfer_time_read(len(toks), buf.capacity, self.xi_r)))
        return True

    # -- actor interface -----------------------------------------------------------------

    def run(self, threshold: int) -> int:
        progress = 0
        if self.in_flight and self._poll():
            progress += 1
        for key, buf in self.out_bufs.items():
            ch = self.out_ch[key]
            n = min(len(buf), ch.space())
            if n:
                ch.push_many(buf.take(n))
                progress += n
        new = 0
        for key, buf in self.in_bufs.items():
            ch = self.in_ch[key]
            n = min(ch.available(), buf.room)
            if n:
                buf.extend(ch.read_many(n))
                new += n
        progress += new
        if not self.in_flight:
            reason = self._flush_reason(new)
            if reason is not None:
                self._start_kernel(reason)
                progress += 1
        return progress

    def _flush_reason(self, new: int) -> str | None:
        if not self.started:
            return "initial"
        if any(b.full for b in self.in_bufs.values()):
            return "buffer-full"
        if new == 0 and any(len(b) for b in self.in_bufs.values()):
            return "producers-idle"
        last = self.last
        if last is not None and not any(len(b) for b in self.out_bufs.values()):
            if last.output_blocked or (last.input_pending and last.progressed):
                return "output-limited"
        return None

    def held_tokens(self) -> dict[str, int]:
        out = {k: len(b) for k, b in self.in_bufs.items()}
        for k in self.in_bufs:
            out[k] += len(self.sim.in_stages[k])
        for k, b in self.out_bufs.items():
            out[k] = len(b) + self.sim.queue_count(k)
        return out

    def shutdown(self) -> None:
        if self._helper is not None:
            self._requests.put(None)
            self._helper.join()
            self._helper = None
