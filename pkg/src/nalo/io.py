"""JSON file formats for walks, progressions, transfer distributions and run manifests.

Every weight and length is an exact rational string ``"p/q"``; elements use the
group's text encoding (:meth:`GroupContext.encode`).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import DomainError
from .groups import GroupContext
from .measure import Measure, WalkSpec
from .nilprog import CosetNilprogression, Progression
from .rational import as_fraction, fraction_str


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: not valid JSON ({exc})") from exc


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ----------------------------------------------------------------- walks
def walk_from_json(obj: dict) -> WalkSpec:
    if "group" not in obj or "steps" not in obj:
        raise DomainError("walk file needs 'group' and 'steps'")
    ctx = GroupContext.from_json(obj["group"])
    steps = []
    for i, st in enumerate(obj["steps"], 1):
        atoms: dict = {}
        for a in st.get("atoms", []):
            g = ctx.decode(a["elem"])
            atoms[g] = atoms.get(g, 0) + as_fraction(a["w"])
        try:
            steps.append(Measure(ctx, atoms))
        except DomainError as exc:
            raise DomainError(f"step {i}: {exc}") from exc
    return WalkSpec(ctx, tuple(steps), as_fraction(obj.get("p0", "0")))


def walk_to_json(walk: WalkSpec) -> dict:
    ctx = walk.ctx
    return {
        "group": ctx.to_json(),
        "p0": fraction_str(walk.p0),
        "steps": [
            {"atoms": [{"elem": ctx.encode(g), "w": fraction_str(w)} for g, w in sorted(s.atoms.items())]}
            for s in walk.steps
        ],
    }


def load_walk(path) -> WalkSpec:
    return walk_from_json(read_json(path))


# ----------------------------------------------------------- progressions
def progression_from_json(obj: dict, ctx: GroupContext | None = None) -> CosetNilprogression:
    if "group" in obj:
        ctx = GroupContext.from_json(obj["group"])
    if ctx is None:
        raise DomainError("progression file has no 'group' and none was supplied")
    gens = [ctx.decode(g) for g in obj["generators"]]
    lens = [as_fraction(x) for x in obj["lengths"]]
    C = obj.get("C")
    P = Progression(ctx, tuple(gens), tuple(lens), obj.get("step"), None if C is None else as_fraction(C))
    H = [ctx.decode(h) for h in obj.get("H", [])] or None
    return CosetNilprogression(P, H)


def progression_to_json(hp: CosetNilprogression) -> dict:
    ctx, P = hp.ctx, hp.P
    out = {
        "group": ctx.to_json(),
        "generators": [ctx.encode(g) for g in P.generators],
        "lengths": [fraction_str(x) for x in P.lengths],
        "H": sorted(ctx.encode(h) for h in hp.H),
    }
    if P.step is not None:
        out["step"] = P.step
    if P.C is not None:
        out["C"] = fraction_str(P.C)
    return out


def load_progression(path, ctx: GroupContext | None = None) -> CosetNilprogression:
    return progression_from_json(read_json(path), ctx)


def load_catalog(path, ctx: GroupContext) -> list:
    """Progressions from one file (an object or a list) or every ``*.json`` in a directory."""
    p = Path(path)
    files = sorted(p.glob("*.json")) if p.is_dir() else [p]
    out = []
    for f in files:
        obj = read_json(f)
        for item in obj if isinstance(obj, list) else [obj]:
            out.append(progression_from_json(item, ctx))
    return out


# -------------------------------------------------- transfer distributions
def dists_from_json(obj) -> tuple:
    """``{"atoms": [{"eps": "1", "w": "1/2"}, ...]}`` or a list of these (one per step)."""
    items = obj if isinstance(obj, list) else [obj]
    out = []
    for d in items:
        dist: dict = {}
        for a in d["atoms"]:
            e = as_fraction(a["eps"])
            dist[e] = dist.get(e, Fraction(0)) + as_fraction(a["w"])
        out.append(dist)
    return tuple(out)


# ---------------------------------------------------------------- manifest
@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    params: dict
    inputs: dict = field(default_factory=dict)  # path -> sha256
    seed: int | None = None
    version: str = ""
    argv: tuple = ()

    def to_json(self) -> dict:
        return {"subcommand": self.subcommand, "params": self.params, "inputs": self.inputs,
                "seed": self.seed, "version": self.version, "argv": list(self.argv)}
