"""Piecewise-linear transfer-time curves (tokens -> ns)."""

from __future__ import annotations

import bisect
from dataclasses import dataclass


@dataclass(frozen=True)
class Curve:
    sizes: tuple[int, ...]
    ns: tuple[float, ...]

    def __post_init__(self):
        if len(self.sizes) != len(self.ns) or not self.sizes:
            raise ValueError("curve needs matching, nonempty size and time lists")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("curve sizes must be strictly increasing")
        if self.sizes[0] <= 0 or any(t < 0 for t in self.ns):
            raise ValueError("curve sizes must be positive and times nonnegative")

    @classmethod
    def from_points(cls, points) -> "Curve":
        pts = sorted((int(s), float(t)) for s, t in points)
        return cls(tuple(s for s, _ in pts), tuple(t for _, t in pts))

    @classmethod
    def affine(cls, latency: float, per_token: float, sizes=(1, 1 << 20)) -> "Curve":
        return cls(tuple(sizes), tuple(latency + per_token * s for s in sizes))

    def __call__(self, k: float) -> float:
        """Time for a transfer of ``k`` tokens; 0 at 0, linear between and beyond points."""
        if k <= 0:
            return 0.0
        xs, ys = self.sizes, self.ns
        if k <= xs[0]:
            return ys[0] * k / xs[0] if len(xs) == 1 or k < xs[0] else ys[0]
        if len(xs) == 1:
            return ys[0] * k / xs[0]
        i = bisect.bisect_left(xs, k)
        if i < len(xs) and xs[i] == k:
            return ys[i]
        if i >= len(xs):
            i = len(xs) - 1
        x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
        return max(0.0, y0 + (y1 - y0) * (k - x0) / (x1 - x0))

    def scaled(self, k: float) -> "Curve":
        return Curve(self.sizes, tuple(t * k for t in self.ns))

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "ns": list(self.ns)}

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        return cls(tuple(int(s) for s in d["sizes"]), tuple(float(t) for t in d["ns"]))


# Synthetic defaults used when nothing was measured.  Boundary transfers pay a
# fixed launch latency; FIFO hops are cheap per token.
DEFAULT_READ = Curve.affine(8_000.0, 0.6)
DEFAULT_WRITE = Curve.affine(6_000.0, 0.5)
DEFAULT_INTRA = Curve.affine(0.0, 2.0)
DEFAULT_INTER = Curve.affine(40.0, 6.0)
