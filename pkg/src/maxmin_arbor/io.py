"""JSON (de)serialisation of instances and solutions."""

from __future__ import annotations

import json
from pathlib import Path as FsPath

from .core import Instance, LayeredInstance, SolutionForest


def instance_to_dict(inst: Instance | LayeredInstance) -> dict:
    base = inst.base if isinstance(inst, LayeredInstance) else inst
    out = {
        "n": base.n,
        "edges": base.edge_array.tolist(),
        "sources": sorted(base.sources),
        "sinks": sorted(base.sinks),
    }
    if isinstance(inst, LayeredInstance):
        out["layers"] = [list(layer) for layer in inst.layers]
        if inst.provenance is not None:
            out["provenance"] = inst.provenance
    return out


def instance_from_dict(d: dict) -> Instance | LayeredInstance:
    base = Instance(d["n"], d.get("edges", []), d.get("sources", []), d.get("sinks", []))
    if d.get("layers") is not None:
        return LayeredInstance(base, d["layers"], d.get("provenance"))
    return base


def solution_to_dict(sol: SolutionForest, **extra) -> dict:
    """Nodes listed in breadth-first order; parents refer to list positions."""
    rel = sol.relabeled()
    nodes = [{"path": list(rel.paths[i]), "parent": rel.parents[i]} for i in range(len(rel))]
    return {"nodes": nodes, **extra}


def solution_from_dict(d: dict) -> SolutionForest:
    return SolutionForest.from_records([(n["path"], n["parent"]) for n in d["nodes"]])


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(obj, path: str | FsPath | None) -> str:
    text = dumps(obj)
    if path is None or str(path) == "-":
        print(text)
    else:
        FsPath(path).write_text(text + "\n")
    return text


def read_json(path: str | FsPath) -> dict:
    return json.loads(FsPath(path).read_text())


def load_instance(path: str | FsPath) -> Instance | LayeredInstance:
    return instance_from_dict(read_json(path))


def load_solution(path: str | FsPath) -> SolutionForest:
    return solution_from_dict(read_json(path))
