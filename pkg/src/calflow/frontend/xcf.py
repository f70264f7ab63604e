"""XCF partition configuration files.

Document shape::

    <configuration>
      <partitioning>
        <partition id="0" pe="FPGA" scheduling-type="FULL" code-generator="hw">
          <instance id="source"/>
        </partition>
        <partition id="1" pe="x86_64" scheduling-type="ROUND_ROBIN" code-generator="sw">
          <instance id="sink"/>
        </partition>
      </partitioning>
      <code-generators>
        <code-generator id="sw" platform="multicore"/>
        <code-generator id="hw" platform="vivado-hls"/>
      </code-generators>
      <connections>
        <fifo-connection source="source" source-port="OUT" target="filter" target-port="IN" size="64"/>
      </connections>
    </configuration>

A partition whose ``code-generator`` is ``hw`` (or whose ``pe`` is ``FPGA``) is the
accelerator; every other partition is one software thread.  Attributes other
than ``id`` and ``code-generator`` are kept verbatim as partition settings.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping
from xml.dom import minidom

from calflow.errors import XcfError

SOFTWARE = "software-thread"
ACCELERATOR = "accelerator"


@dataclass(frozen=True)
class Partition:
    id: str
    kind: str
    members: tuple[str, ...]
    settings: dict[str, str] = field(default_factory=dict, hash=False)

    @property
    def is_accelerator(self) -> bool:
        return self.kind == ACCELERATOR


@dataclass(frozen=True)
class ChannelConfig:
    depth: int | None = None  # tokens
    buffer_bytes: int | None = None  # host/device boundary buffer


@dataclass(frozen=True)
class PartitionPlan:
    partitions: tuple[Partition, ...]
    channels: dict[str, ChannelConfig] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        seen: dict[str, str] = {}
        accel = 0
        for p in self.partitions:
            if p.kind not in (SOFTWARE, ACCELERATOR):
                raise XcfError(f"partition {p.id!r}: unknown kind {p.kind!r}")
            accel += p.is_accelerator
            for m in p.members:
                if m in seen:
                    raise XcfError(f"instance {m!r} assigned to both partition {seen[m]!r} and {p.id!r}")
                seen[m] = p.id
        if accel > 1:
            raise XcfError("at most one accelerator partition is allowed")
        ids = [p.id for p in self.partitions]
        if len(ids) != len(set(ids)):
            raise XcfError("duplicate partition id")
        for key, cfg in self.channels.items():
            for what, v in (("size", cfg.depth), ("buffer-size", cfg.buffer_bytes)):
                if v is not None and v <= 0:
                    raise XcfError(f"connection {key}: {what} must be positive")

    # -- queries ----------------------------------------------------------------

    @property
    def accelerator(self) -> Partition | None:
        for p in self.partitions:
            if p.is_accelerator:
                return p
        return None

    @property
    def software(self) -> list[Partition]:
        return [p for p in self.partitions if not p.is_accelerator]

    def partition_of(self, instance: str) -> Partition:
        for p in self.partitions:
            if instance in p.members:
                return p
        raise KeyError(instance)

    def on_accelerator(self, instance: str) -> bool:
        acc = self.accelerator
        return acc is not None and instance in acc.members

    def assignment(self) -> dict[str, str]:
        """instance -> "p1".."pn" (software threads in order) or "accel"."""
        out = {}
        for i, p in enumerate(self.software):
            for m in p.members:
                out[m] = f"p{i + 1}"
        if self.accelerator is not None:
            for m in self.accelerator.members:
                out[m] = "accel"
        return out

    # -- constructors -------------------------------------------------------------

    @classmethod
    def single_thread(cls, instances, channels: Mapping[str, ChannelConfig] | None = None) -> "PartitionPlan":
        return cls((Partition("0", SOFTWARE, tuple(instances), {}),), dict(channels or {}))

    @classmethod
    def from_assignment(
        cls,
        assignment: Mapping[str, str],
        n_threads: int | None = None,
        channels: Mapping[str, ChannelConfig] | None = None,
    ) -> "PartitionPlan":
        """Build a plan from ``instance -> "p<k>" | "accel"``; thread k gets id ``k-1``."""
        used = [int(v[1:]) for v in assignment.values() if v != "accel"]
        n = max(used + [n_threads or 0, 1])
        parts = []
        for k in range(1, n + 1):
            members = tuple(a for a, v in assignment.items() if v == f"p{k}")
            parts.append(Partition(str(k - 1), SOFTWARE, members, {}))
        acc = tuple(a for a, v in assignment.items() if v == "accel")
        if acc:
            parts.insert(0, Partition("accel", ACCELERATOR, acc, {}))
        return cls(tuple(parts), dict(channels or {}))


# -- XML ----------------------------------------------------------------------------


def parse_xcf(doc: str, graph=None) -> PartitionPlan:
    """Parse an XCF document.  With a ``graph``, names are checked and instances the
    document does not mention are added to the first software partition (a new
    partition ``default`` when there is none)."""
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as e:
        raise XcfError(f"malformed XML: {e}") from None
    if root.tag != "configuration":
        raise XcfError(f"expected <configuration> root, found <{root.tag}>")
    parts: list[Partition] = []
    seen: dict[str, str] = {}
    known = set(graph.instances) if graph is not None else None
    partitioning = root.find("partitioning")
    for el in partitioning.findall("partition") if partitioning is not None else []:
        pid = el.get("id")
        if pid is None:
            raise XcfError("<partition> without id")
        codegen = el.get("code-generator", "sw")
        settings = {k: v for k, v in el.attrib.items() if k not in ("id", "code-generator")}
        kind = ACCELERATOR if codegen == "hw" or settings.get("pe") == "FPGA" else SOFTWARE
        members = []
        for inst in el.findall("instance"):
            name = inst.get("id")
            if name is None:
                raise XcfError(f"partition {pid!r}: <instance> without id")
            if known is not None and name not in known:
                raise XcfError(f"partition {pid!r}: unknown instance {name!r}")
            if name in seen:
                raise XcfError(f"instance {name!r} assigned to both partition {seen[name]!r} and {pid!r}")
            seen[name] = pid
            members.append(name)
        if codegen not in ("hw", "sw"):
            settings["code-generator"] = codegen
        parts.append(Partition(pid, kind, tuple(members), settings))

    channels: dict[str, ChannelConfig] = {}
    conns = root.find("connections")
    for el in conns.findall("fifo-connection") if conns is not None else []:
        try:
            key = f"{el.attrib['source']}.{el.attrib['source-port']}->{el.attrib['target']}.{el.attrib['target-port']}"
        except KeyError as e:
            raise XcfError(f"<fifo-connection> missing attribute {e.args[0]!r}") from None
        if graph is not None and key not in {c.key for c in graph.connections}:
            raise XcfError(f"unknown connection {key}")
        try:
            depth = int(el.get("size")) if el.get("size") is not None else None
            buf = int(el.get("buffer-size")) if el.get("buffer-size") is not None else None
        except ValueError:
            raise XcfError(f"connection {key}: non-integer size") from None
        channels[key] = ChannelConfig(depth, buf)

    if graph is not None:
        missing = [n for n in graph.instances if n not in seen]
        if missing:
            for i, p in enumerate(parts):
                if not p.is_accelerator:
                    parts[i] = Partition(p.id, p.kind, p.members + tuple(missing), p.settings)
                    break
            else:
                pid = "default"
                while pid in {p.id for p in parts}:
                    pid += "_"
                parts.append(Partition(pid, SOFTWARE, tuple(missing), {}))
    return PartitionPlan(tuple(parts), channels)


def emit_xcf(plan: PartitionPlan) -> str:
    root = ET.Element("configuration")
    partitioning = ET.SubElement(root, "partitioning")
    for p in plan.partitions:
        attrs = {"id": p.id}
        attrs.update(p.settings)
        attrs.setdefault("code-generator", "hw" if p.is_accelerator else "sw")
        el = ET.SubElement(partitioning, "partition", attrs)
        for m in p.members:
            ET.SubElement(el, "instance", {"id": m})
    gens = ET.SubElement(root, "code-generators")
    ET.SubElement(gens, "code-generator", {"id": "sw", "platform": "multicore"})
    ET.SubElement(gens, "code-generator", {"id": "hw", "platform": "vivado-hls"})
    conns = ET.SubElement(root, "connections")
    for key, cfg in plan.channels.items():
        src, dst = key.split("->")
        s_inst, s_port = src.rsplit(".", 1)
        t_inst, t_port = dst.rsplit(".", 1)
        attrs = {"source": s_inst, "source-port": s_port, "target": t_inst, "target-port": t_port}
        if cfg.depth is not None:
            attrs["size"] = str(cfg.depth)
        if cfg.buffer_bytes is not None:
            attrs["buffer-size"] = str(cfg.buffer_bytes)
        ET.SubElement(conns, "fifo-connection", attrs)
    text = minidom.parseString(ET.tostring(root, encoding="unicode")).toprettyxml(indent="  ")
    return text
