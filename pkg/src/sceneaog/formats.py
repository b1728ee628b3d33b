"""JSON file formats: corpus scenes, grammars, grouping rules, models, scenes.

Everything is written with sorted keys and ``repr``-exact floats, so
``load(save(x)) == x`` and repeated saves are byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CORPUS_SCHEMA = "sceneaog/corpus-scene-v1"
GRAMMAR_SCHEMA = "sceneaog/grammar-v1"
RULES_SCHEMA = "sceneaog/grouping-rules-v1"
MODEL_SCHEMA = "sceneaog/model-v1"
SCENE_SCHEMA = "sceneaog/scene-v1"


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusInstance:
    category: str
    size: tuple
    position: tuple
    yaw: float = 0.0
    supported_by: int | None = None
    humans: tuple = ()


@dataclass(frozen=True)
class CorpusScene:
    scene_id: str
    scene_type: str
    room_size: tuple
    instances: tuple = ()


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}: {e.msg}") from None


def _check_schema(d, schema, where):
    if not isinstance(d, dict) or d.get("schema") != schema:
        got = d.get("schema") if isinstance(d, dict) else type(d).__name__
        raise FormatError(f"{where}: expected schema {schema!r}, got {got!r}")


def _finite_vec(v, n, what, where):
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: {what} must be a list of numbers") from None
    if len(out) != n or not all(math.isfinite(x) for x in out):
        raise FormatError(f"{where}: {what} must be {n} finite numbers, got {v!r}")
    return out


# --- corpus -------------------------------------------------------------------

def corpus_scene_from_dict(d, where="scene"):
    _check_schema(d, CORPUS_SCHEMA, where)
    sid = str(d.get("id", where))
    where = f"{where} ({sid})" if sid != where else where
    try:
        stype = str(d["scene_type"])
        room = _finite_vec(d["room_size"], 3, "room_size", where)
        raw = d["instances"]
    except KeyError as e:
        raise FormatError(f"{where}: missing field {e.args[0]!r}") from None
    insts = []
    for i, r in enumerate(raw):
        iw = f"{where} instance {i}"
        try:
            size = _finite_vec(r["size"], 3, "size", iw)
            pos = _finite_vec(r["position"], 3, "position", iw)
            cat = str(r["category"])
        except KeyError as e:
            raise FormatError(f"{iw}: missing field {e.args[0]!r}") from None
        if min(size) <= 0:
            raise FormatError(f"{iw}: sizes must be positive")
        sup = r.get("supported_by")
        if sup is not None and (not isinstance(sup, int) or not 0 <= sup < len(raw) or sup == i):
            raise FormatError(f"{iw}: dangling supported_by index {sup!r}")
        humans = tuple(_finite_vec(h, 2, "human", iw) for h in r.get("humans", ()))
        insts.append(CorpusInstance(cat, size, pos, float(r.get("yaw", 0.0)), sup, humans))
    return CorpusScene(sid, stype, room, tuple(insts))


def corpus_scene_to_dict(cs):
    insts = []
    for inst in cs.instances:
        r = {"category": inst.category, "size": list(inst.size), "position": list(inst.position),
             "yaw": inst.yaw}
        if inst.supported_by is not None:
            r["supported_by"] = inst.supported_by
        if inst.humans:
            r["humans"] = [list(h) for h in inst.humans]
        insts.append(r)
    return {"schema": CORPUS_SCHEMA, "id": cs.scene_id, "scene_type": cs.scene_type,
            "room_size": list(cs.room_size), "instances": insts}


def load_corpus(path):
    """Read a corpus: a directory of scene files or one file holding ``scenes``."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        scenes = [corpus_scene_from_dict(read_json(f), f.name) for f in files]
    else:
        d = read_json(path)
        if isinstance(d, dict) and "scenes" in d:
            scenes = [corpus_scene_from_dict(s, f"{path.name}[{i}]") for i, s in enumerate(d["scenes"])]
        else:
            scenes = [corpus_scene_from_dict(d, path.name)]
    if not scenes:
        raise FormatError(f"{path}: corpus has no scenes")
    return scenes


def save_corpus(path, scenes):
    """Write one file per scene into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    width = max(len(str(len(scenes))), 4)
    for i, cs in enumerate(scenes):
        write_json(path / f"scene_{i:0{width}d}.json", corpus_scene_to_dict(cs))


# --- grammar and rules --------------------------------------------------------

def grammar_to_dict(g):
    nodes = {}
    for nid, n in g.nodes.items():
        d = {"kind": n.kind}
        if n.children:
            d["children"] = list(n.children)
        if n.category is not None:
            d["category"] = n.category
        if n.role is not None:
            d["role"] = n.role
        if n.candidates:
            d["candidates"] = list(n.candidates)
        nodes[nid] = d
    return {"schema": GRAMMAR_SCHEMA, "root": g.root, "nodes": nodes}


def grammar_from_dict(d, where="grammar"):
    from .scene import Grammar, NodeSpec
    _check_schema(d, GRAMMAR_SCHEMA, where)
    try:
        nodes = {nid: NodeSpec(nid, n["kind"], tuple(n.get("children", ())), n.get("category"),
                               n.get("role"), tuple(n.get("candidates", ())))
                 for nid, n in d["nodes"].items()}
        return Grammar(d["root"], nodes)
    except (KeyError, ValueError) as e:
        raise FormatError(f"{where}: {e}") from None


def load_grammar(path):
    return grammar_from_dict(read_json(path), str(path))


def rules_to_dict(rules):
    return {"schema": RULES_SCHEMA, "associations": {k: list(v) for k, v in rules.table.items()},
            "threshold": rules.threshold}


def rules_from_dict(d, where="rules"):
    from .learning import GroupingRules
    _check_schema(d, RULES_SCHEMA, where)
    return GroupingRules({k: tuple(v) for k, v in d.get("associations", {}).items()},
                         float(d.get("threshold", 1.5)))


def load_rules(path):
    return rules_from_dict(read_json(path), str(path))


# --- distributions ------------------------------------------------------------

def _dist_to_dict(d):
    from . import prob
    if isinstance(d, prob.Categorical):
        return {"type": "categorical", "outcomes": list(d.outcomes), "probs": list(d.probs)}
    if isinstance(d, prob.LogNormalDist):
        return {"type": "lognormal", "mu": d.mu, "sigma": d.sigma}
    if isinstance(d, prob.VonMisesMixture):
        return {"type": "vonmises", "components": [list(c) for c in d.components]}
    if isinstance(d, prob.KDEDist):
        return {"type": "kde", "samples": [list(p) for p in d.samples], "bandwidths": list(d.bandwidths)}
    raise TypeError(type(d))


def _dist_from_dict(d):
    from . import prob
    t = d["type"]
    if t == "categorical":
        return prob.Categorical(tuple(d["outcomes"]), tuple(d["probs"]))
    if t == "lognormal":
        return prob.LogNormalDist(d["mu"], d["sigma"])
    if t == "vonmises":
        return prob.VonMisesMixture(tuple(tuple(c) for c in d["components"]))
    if t == "kde":
        return prob.KDEDist(tuple(tuple(p) for p in d["samples"]), tuple(d["bandwidths"]))
    raise FormatError(f"unknown distribution type {t!r}")


def _amap_to_dict(m):
    return {"category": m.category, "extent": m.extent, "resolution": m.resolution,
            "smoothing": m.smoothing, "grid": m.grid.tolist()}


def _amap_from_dict(d):
    from .affordance import AffordanceMap
    return AffordanceMap(d["category"], d["extent"], d["resolution"], np.array(d["grid"], dtype=float),
                         d["smoothing"])


_TABLES = ("or_dists", "set_count_dists", "address_dists", "size_kdes", "room_size_kdes",
           "wall_dist", "wall_orient")


def model_to_dict(model):
    out = {"schema": MODEL_SCHEMA, "grammar": grammar_to_dict(model.grammar),
           "weights": model.weights.as_dict(), "category_index": dict(model.category_index),
           "config": model.config,
           "affordances": {k: _amap_to_dict(v) for k, v in model.affordances.items()}}
    for name in _TABLES:
        out[name] = {k: _dist_to_dict(v) for k, v in getattr(model, name).items()}
    return out


def model_from_dict(d, where="model"):
    from .energy import Weights
    from .learning import LearnedModel
    _check_schema(d, MODEL_SCHEMA, where)
    try:
        tables = {name: {k: _dist_from_dict(v) for k, v in d[name].items()} for name in _TABLES}
        return LearnedModel(
            grammar=grammar_from_dict(d["grammar"]),
            affordances={k: _amap_from_dict(v) for k, v in d["affordances"].items()},
            weights=Weights.from_dict(d["weights"]),
            category_index=dict(d["category_index"]),
            config=d["config"],
            **tables)
    except (KeyError, ValueError, TypeError) as e:
        raise FormatError(f"{where}: malformed model ({e})") from None


def save_model(path, model):
    write_json(path, model_to_dict(model))


def load_model(path):
    return model_from_dict(read_json(path), str(path))


# --- synthesized scenes -------------------------------------------------------

def _inst_to_dict(o):
    return {"category": o.category, "size": list(o.size), "position": list(o.position), "yaw": o.yaw,
            "address": o.address, "humans": [list(h) for h in o.humans]}


def _inst_from_dict(d):
    from .scene import ObjectInstance
    return ObjectInstance(d["category"], tuple(d["size"]), tuple(d["position"]), d["yaw"],
                          d.get("address"), tuple(tuple(h) for h in d.get("humans", ())))


def scene_to_dict(scene):
    tc = scene.tree_choices
    return {"schema": SCENE_SCHEMA,
            "room": {"size": list(scene.room.size), "scene_type": scene.room.scene_type,
                     "origin": list(scene.room.origin)},
            "furniture": [_inst_to_dict(o) for o in scene.furniture],
            "supported_objects": [_inst_to_dict(o) for o in scene.supported_objects],
            "tree_choices": {"or": [list(c) for c in tc.or_choices],
                             "set": [list(c) for c in tc.set_counts]}}


def scene_from_dict(d, where="scene"):
    from .scene import Room, SceneLayout, TreeChoices
    _check_schema(d, SCENE_SCHEMA, where)
    try:
        r = d["room"]
        room = Room(tuple(r["size"]), r["scene_type"], tuple(r.get("origin", (0.0, 0.0))))
        tc = d.get("tree_choices", {})
        return SceneLayout(room, tuple(_inst_from_dict(o) for o in d["furniture"]),
                           tuple(_inst_from_dict(o) for o in d["supported_objects"]),
                           TreeChoices(tuple(tuple(c) for c in tc.get("or", ())),
                                       tuple(tuple(c) for c in tc.get("set", ()))))
    except (KeyError, ValueError, TypeError) as e:
        raise FormatError(f"{where}: malformed scene ({e})") from None


def export_scene(path, scene):
    write_json(path, scene_to_dict(scene))


def load_scene(path):
    return scene_from_dict(read_json(path), str(path))


def load_scenes(path):
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise FormatError(f"{path}: no scene files")
    return [load_scene(f) for f in files]
