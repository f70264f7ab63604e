"""Single-producer/single-consumer ring buffers with deferred counter publication.

Each channel keeps four monotonically increasing counters:

* ``local_write``  producer-private, advanced on every push
* ``global_write`` published copy of ``local_write``
* ``local_read``   consumer-private, advanced on every consume
* ``global_read``  published copy of ``local_read``

and two snapshots taken at pre-fire: ``seen_write`` (the consumer's view of
``global_write``) and ``seen_read`` (the producer's view of ``global_read``).
Threads therefore only observe the other side's progress at publication
points.  A channel whose two ends live on the same thread bypasses the
snapshots and sees the private counters directly.

Counters are plain Python ints; a single attribute store is atomic under the
interpreter lock, and the token slots are written before the counter store that
makes them visible.
"""

from __future__ import annotations

from typing import Any, Sequence


class DeferredVisibilityError(AssertionError):
    pass


class RingChannel:
    __slots__ = (
        "capacity", "buffer", "local_write", "global_write", "local_read", "global_read",
        "seen_write", "seen_read", "intra", "key", "trace", "check",
    )

    def __init__(self, capacity: int, key: str = "", intra: bool = False, trace: bool = False,
                 check: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.buffer: list[Any] = [None] * capacity
        self.local_write = 0
        self.global_write = 0
        self.local_read = 0
        self.global_read = 0
        self.seen_write = 0
        self.seen_read = 0
        self.intra = intra
        self.key = key
        self.trace: list[Any] | None = [] if trace else None
        self.check = check

    # -- producer side ----------------------------------------------------------

    def space(self) -> int:
        read = self.local_read if self.intra else self.seen_read
        return self.capacity - (self.local_write - read)

    def push(self, token: Any) -> None:
        w = self.local_write
        self.buffer[w % self.capacity] = token
        self.local_write = w + 1
        if self.trace is not None:
            self.trace.append(token)

    def push_many(self, tokens: Sequence[Any]) -> None:
        n = len(tokens)
        if n > self.space():
            raise OverflowError(f"{self.key}: push of {n} tokens with {self.space()} free")
        start = self.local_write % self.capacity
        first = min(n, self.capacity - start)
        self.buffer[start:start + first] = tokens[:first]
        if first < n:
            self.buffer[: n - first] = tokens[first:]
        self.local_write += n
        if self.trace is not None:
            self.trace.extend(tokens)

    def publish_writes(self) -> None:
        if self.check:
            read = self.local_read if self.intra else self.seen_read
            if self.local_write < self.global_write or self.local_write - read > self.capacity:
                raise DeferredVisibilityError(f"{self.key}: write publication past capacity or backwards")
        self.global_write = self.local_write

    def refresh_reads(self) -> None:
        """Producer pre-fire: snapshot the consumer's published read counter."""
        g = self.global_read
        if self.check and g > self.local_read:
            raise DeferredVisibilityError(f"{self.key}: global read ahead of local read")
        self.seen_read = g

    # -- consumer side ------------------------------------------------------------

    def available(self) -> int:
        write = self.local_write if self.intra else self.seen_write
        return write - self.local_read

    def peek(self, i: int) -> Any:
        return self.buffer[(self.local_read + i) % self.capacity]

    def consume(self, n: int) -> None:
        self.local_read += n

    def read_many(self, n: int) -> list[Any]:
        if n > self.available():
            raise ValueError(f"{self.key}: read of {n} tokens with {self.available()} available")
        start = self.local_read % self.capacity
        first = min(n, self.capacity - start)
        out = self.buffer[start:start + first]
        if first < n:
            out += self.buffer[: n - first]
        self.local_read += n
        return out

    def publish_reads(self) -> None:
        if self.check:
            write = self.local_write if self.intra else self.seen_write
            if self.local_read < self.global_read or self.local_read > write:
                raise DeferredVisibilityError(f"{self.key}: read publication past visible writes or backwards")
        self.global_read = self.local_read

    def refresh_writes(self) -> None:
        """Consumer pre-fire: snapshot the producer's published write counter."""
        g = self.global_write
        if self.check:
            if g - self.global_read > self.capacity or g < self.seen_write:
                raise DeferredVisibilityError(f"{self.key}: occupancy bound violated")
            if g > self.local_write:
                raise DeferredVisibilityError(f"{self.key}: published more than written")
        self.seen_write = g

    # -- diagnostics --------------------------------------------------------------

    def occupancy(self) -> int:
        """Published occupancy."""
        return self.global_write - self.global_read

    def pending(self) -> int:
        """Tokens written and not yet consumed (private counters)."""
        return self.local_write - self.local_read

    def __repr__(self) -> str:
        return (f"RingChannel({self.key!r}, cap={self.capacity}, w={self.local_write}/{self.global_write}, "
                f"r={self.local_read}/{self.global_read})")


class FanOut:
    """Output view broadcasting to several channels (one output port, many connections)."""

    __slots__ = ("targets",)

    def __init__(self, targets: list):
        self.targets = targets

    def space(self) -> int:
        return min(t.space() for t in self.targets)

    def push(self, token: Any) -> None:
        for t in self.targets:
            t.push(token)


class NullInput:
    """An unconnected input port: never has tokens."""

    def available(self) -> int:
        return 0

    def peek(self, i: int) -> Any:  # pragma: no cover - guarded by available()
        raise IndexError("unconnected input port")

    def consume(self, n: int) -> None:  # pragma: no cover
        raise IndexError("unconnected input port")


class NullOutput:
    """An unconnected output port: unbounded, tokens are dropped."""

    def space(self) -> int:
        return 1 << 30

    def push(self, token: Any) -> None:
        pass
