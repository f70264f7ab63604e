"""Compiled-network bundles.

A bundle is JSON holding the CAL sources, the top network name, parameter
overrides and a summary of each actor machine.  Loading re-elaborates the
sources, so a bundle stays valid as long as its format version matches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from calflow.errors import BundleVersionError
from calflow.frontend import NetworkGraph, parse_program
from calflow.machine import ActorMachine, build_siam

FORMAT = "calflow-bundle"
VERSION = 1


@dataclass
class Bundle:
    sources: list[tuple[str, str]]
    top: str
    params: dict[str, Any] = field(default_factory=dict)
    controllers: dict[str, dict] = field(default_factory=dict)

    def elaborate(self, host=None) -> NetworkGraph:
        return parse_program(self.sources, self.top, host, self.params or None)

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "top": self.top,
            "params": self.params,
            "sources": [{"name": n, "text": t} for n, t in self.sources],
            "controllers": self.controllers,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Bundle":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise BundleVersionError(f"not a bundle: {e}") from None
        if not isinstance(doc, dict) or doc.get("format") != FORMAT:
            raise BundleVersionError("not a bundle file")
        if doc.get("version") != VERSION:
            raise BundleVersionError(f"bundle version {doc.get('version')!r} is not supported (expected {VERSION})")
        return cls([(s["name"], s["text"]) for s in doc["sources"]], doc["top"], dict(doc.get("params", {})),
                   dict(doc.get("controllers", {})))


def _summary(am: ActorMachine) -> dict:
    return {"actor": am.actor.actor_name, "conditions": len(am.conditions), "states": len(am.states),
            "instructions": am.counts()}


def compile_bundle(sources: list[tuple[str, str]], top: str, params: dict | None = None
                   ) -> tuple[Bundle, NetworkGraph, dict[str, ActorMachine]]:
    graph = parse_program(sources, top, None, params or None)
    machines = {n: build_siam(graph.actor(n)) for n in graph.instances}
    b = Bundle(list(sources), top, dict(params or {}), {n: _summary(m) for n, m in machines.items()})
    return b, graph, machines


def save_bundle(bundle: Bundle, path: str | Path) -> None:
    Path(path).write_text(bundle.to_json())


def load_bundle(path: str | Path) -> Bundle:
    return Bundle.from_json(Path(path).read_text())
