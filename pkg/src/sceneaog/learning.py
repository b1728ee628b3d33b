"""Corpus statistics, maximum-likelihood fits and contrastive-divergence weights."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from . import affordance
from .energy import ENT, N_SLOTS, SLOTS, HeatmapCache, Weights, loss_features, set_key
from .geometry import nearest_wall
from .prob import (SIGMA_MIN, Categorical, FitError, KDEDist, LogNormalDist, VonMisesMixture,
                   kappa_from_resultant)
from .scene import NIL, TWO_PI, GrammarError, ObjectInstance, Room, SceneLayout, TreeChoices

log = logging.getLogger(__name__)

GROUPING_THRESHOLD = 1.5
DEFAULT_ASSOCIATIONS = {"nightstand": ("bed",), "chair": ("desk", "table")}


class SchemaError(ValueError):
    pass


class CDDivergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class GroupingRules:
    """Hand-defined functional groups: associated category -> core categories."""

    table: dict = field(default_factory=lambda: dict(DEFAULT_ASSOCIATIONS))
    threshold: float = GROUPING_THRESHOLD

    def targets(self, category):
        return self.table.get(category, ())


@dataclass(frozen=True, eq=False)
class LearnedModel:
    grammar: object
    or_dists: dict
    set_count_dists: dict
    address_dists: dict
    size_kdes: dict
    room_size_kdes: dict
    wall_dist: dict
    wall_orient: dict
    affordances: dict
    weights: Weights = Weights()
    category_index: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def with_weights(self, weights):
        if not isinstance(weights, Weights):
            weights = Weights.from_array(weights)
        return replace(self, weights=weights)

    def __eq__(self, other):
        from .formats import model_to_dict
        return isinstance(other, LearnedModel) and model_to_dict(self) == model_to_dict(other)

    __hash__ = None


# --- corpus -> parse graphs ---------------------------------------------------

def _always_expanded_sets(grammar, scene_type):
    """Set nodes expanded once per scene (reached through And-nodes only)."""
    out, stack = [], [scene_type]
    while stack:
        node = grammar.nodes[stack.pop()]
        if node.kind == "Set":
            out.append(node.id)
        elif node.kind == "And":
            stack.extend(reversed(node.children))
    return sorted(out)


def derive_tree_choices(grammar, scene_type, categories):
    """Parse-tree choices that generate the given instance categories."""
    paths = grammar.paths(scene_type)
    ors = []
    root = grammar.nodes[grammar.root]
    if root.kind == "Or":
        ors.append((grammar.root, scene_type))
    counts = Counter()
    for cat in categories:
        if cat not in paths:
            raise GrammarError(f"category {cat!r} cannot be generated by scene type {scene_type!r}")
        path = paths[cat]
        for parent, child in zip(path[:-1], path[1:]):
            kind = grammar.nodes[parent].kind
            if kind == "Or":
                ors.append((parent, child))
            elif kind == "Set":
                counts[(parent, child)] += 1
    sets = []
    for sid in _always_expanded_sets(grammar, scene_type):
        for branch in grammar.nodes[sid].children:
            sets.append((sid, branch, counts[(sid, branch)]))
    return TreeChoices(tuple(sorted(ors)), tuple(sets))


def _nearest_target(i, furniture, targets, threshold):
    best, best_d = None, threshold
    x, y = furniture[i].xy
    for j, f in enumerate(furniture):
        if j == i or f.category not in targets:
            continue
        d = math.hypot(f.position[0] - x, f.position[1] - y)
        if d <= best_d and (best is None or d < best_d or j < best):
            best, best_d = j, d
    return best


def corpus_to_layout(cs, grammar, rules=GroupingRules()):
    """Convert a flat corpus scene into a parse graph with addresses."""
    where = f"scene {cs.scene_id}"
    if cs.scene_type not in grammar.scene_types:
        raise SchemaError(f"{where}: unknown scene type {cs.scene_type!r}")
    paths = grammar.paths(cs.scene_type)
    furn_idx, obj_idx = {}, {}
    for i, inst in enumerate(cs.instances):
        if inst.category not in paths:
            raise SchemaError(f"{where}: category {inst.category!r} not in grammar for {cs.scene_type!r}")
        role = grammar.nodes[paths[inst.category][-1]].role
        (furn_idx if role == "furniture" else obj_idx)[i] = len(furn_idx if role == "furniture" else obj_idx)
    furniture = [None] * len(furn_idx)
    for i, k in furn_idx.items():
        inst = cs.instances[i]
        if inst.supported_by is not None:
            raise SchemaError(f"{where}: furniture instance {i} cannot be supported")
        furniture[k] = ObjectInstance(inst.category, inst.size, inst.position, inst.yaw, None, inst.humans)
    for k, f in enumerate(furniture):
        targets = rules.targets(f.category)
        if targets:
            furniture[k] = replace(f, address=_nearest_target(k, furniture, targets, rules.threshold))
    objects = [None] * len(obj_idx)
    for i, k in obj_idx.items():
        inst = cs.instances[i]
        addr = None
        if inst.supported_by is not None:
            if inst.supported_by not in furn_idx:
                raise SchemaError(f"{where}: instance {i} is supported by a non-furniture instance")
            addr = furn_idx[inst.supported_by]
        objects[k] = ObjectInstance(inst.category, inst.size, inst.position, inst.yaw, addr, inst.humans)
    cats = [inst.category for inst in cs.instances]
    return SceneLayout(Room(cs.room_size, cs.scene_type), tuple(furniture), tuple(objects),
                       derive_tree_choices(grammar, cs.scene_type, cats))


# --- statistics ---------------------------------------------------------------

@dataclass
class CorpusStats:
    scene_types: Counter = field(default_factory=Counter)
    room_sizes: dict = field(default_factory=lambda: defaultdict(list))
    or_counts: dict = field(default_factory=lambda: defaultdict(Counter))
    set_counts: dict = field(default_factory=lambda: defaultdict(Counter))
    occurrences: dict = field(default_factory=lambda: defaultdict(Counter))
    sizes: dict = field(default_factory=lambda: defaultdict(list))
    wall_dists: dict = field(default_factory=lambda: defaultdict(list))
    wall_orients: dict = field(default_factory=lambda: defaultdict(list))
    address_counts: dict = field(default_factory=lambda: defaultdict(Counter))
    grouping_counts: Counter = field(default_factory=Counter)
    support_counts: Counter = field(default_factory=Counter)
    scenes: list = field(default_factory=list)

    def summary(self):
        return {
            "scenes": sum(self.scene_types.values()),
            "scene_types": dict(sorted(self.scene_types.items())),
            "grouping": {f"{a}->{b}": n for (a, b), n in sorted(self.grouping_counts.items())},
            "support": {f"{a}->{b}": n for (a, b), n in sorted(self.support_counts.items())},
        }


def collect_stats(corpus, grammar, rules=GroupingRules()):
    """Accumulate corpus statistics; the result does not depend on corpus order."""
    stats = CorpusStats()
    layouts = []
    for cs in corpus:
        layout = corpus_to_layout(cs, grammar, rules)
        layouts.append((cs.scene_id, layout))
        st = cs.scene_type
        stats.scene_types[st] += 1
        stats.room_sizes[st].append(tuple(cs.room_size))
        for node, child in layout.tree_choices.or_choices:
            stats.or_counts[node][child] += 1
        for node, branch, n in layout.tree_choices.set_counts:
            stats.set_counts[set_key(node, branch)][n] += 1
        for cat in {o.category for o in layout.instances}:
            stats.occurrences[st][cat] += 1
        for o in layout.instances:
            stats.sizes[o.category].append(o.size)
        for f in layout.furniture:
            d, rel = nearest_wall(f, layout.room)
            stats.wall_dists[f.category].append(d)
            stats.wall_orients[f.category].append(rel % TWO_PI)
            if rules.targets(f.category):
                target = layout.furniture[f.address].category if f.address is not None else NIL
                stats.address_counts[f.category][target] += 1
                if f.address is not None:
                    stats.grouping_counts[(f.category, target)] += 1
        for o in layout.supported_objects:
            target = layout.furniture[o.address].category if o.address is not None else NIL
            stats.address_counts[o.category][target] += 1
            if o.address is not None:
                stats.support_counts[(o.category, target)] += 1
    for table in (stats.room_sizes, stats.sizes, stats.wall_dists, stats.wall_orients):
        for k in table:
            table[k].sort()
    stats.scenes = [layout for _, layout in sorted(layouts, key=lambda t: t[0])]
    return stats


# --- maximum likelihood -------------------------------------------------------

def _fit_lognormal(samples):
    x = [max(d, 1e-3) for d in samples]
    if len(x) == 1:
        return LogNormalDist(math.log(x[0]), SIGMA_MIN)
    return LogNormalDist.fit(x)


def _fit_orientation(samples, k):
    n = len(samples)
    k = max(1, min(k, n // 5))
    if n < 5:
        c, s = sum(math.cos(t) for t in samples), sum(math.sin(t) for t in samples)
        return VonMisesMixture(((1.0, math.atan2(s, c) % TWO_PI, kappa_from_resultant(math.hypot(c, s) / n)),))
    return VonMisesMixture.fit(samples, k)


def fingerprint(config):
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def fit_model(stats, grammar, rules=GroupingRules(), n_vm_components=4,
              affordance_extent=affordance.EXTENT, affordance_resolution=affordance.RESOLUTION,
              affordance_smoothing=affordance.SMOOTHING):
    """Fit every distribution of the grammar by maximum likelihood.

    Weights start at zero; see :func:`cd_learn`.
    """
    if not stats.scene_types:
        raise FitError("statistics are empty: no scenes")

    def need(table_name, table):
        if not table:
            raise FitError(f"table {table_name!r} is empty")
        return table

    or_dists = {k: Categorical.fit(v) for k, v in sorted(stats.or_counts.items())}
    set_dists = {k: Categorical.fit(v) for k, v in sorted(need("set_counts", stats.set_counts).items())}
    address = {k: Categorical.fit(v) for k, v in sorted(stats.address_counts.items())}
    sizes = {k: KDEDist.fit(v) for k, v in sorted(need("sizes", stats.sizes).items())}
    rooms = {k: KDEDist.fit(v) for k, v in sorted(need("room_sizes", stats.room_sizes).items())}
    wall_d = {k: _fit_lognormal(v) for k, v in sorted(stats.wall_dists.items())}
    wall_o = {k: _fit_orientation(v, n_vm_components) for k, v in sorted(stats.wall_orients.items())}

    for nid, node in grammar.nodes.items():
        if node.kind == "Or" and nid not in or_dists and (nid != grammar.root or len(node.children) > 1):
            # an Or-node that was never reached in the corpus cannot be sampled
            log.debug("Or-node %s has no observations", nid)
    observed = sorted(stats.sizes)
    affordances = affordance.estimate_maps(stats.scenes, affordance_extent, affordance_resolution,
                                           affordance_smoothing, categories=observed)
    categories = sorted({n.category for n in grammar.terminals()})
    config = {
        "n_vm_components": n_vm_components,
        "affordance": {"extent": affordance_extent, "resolution": affordance_resolution,
                       "smoothing": affordance_smoothing},
        "grouping": {"associations": {k: list(v) for k, v in sorted(rules.table.items())},
                     "threshold": rules.threshold},
        "n_scenes": sum(stats.scene_types.values()),
    }
    config["fingerprint"] = fingerprint(config)
    return LearnedModel(grammar, or_dists, set_dists, address, sizes, rooms, wall_d, wall_o, affordances,
                        Weights(), {c: i + 1 for i, c in enumerate(categories)}, config)


def fill_humans(scenes, model, n_per_object, rng):
    """Give instances without human positions ``n_per_object`` sampled ones.

    With ``n_per_object == 0`` the scenes are returned unchanged.
    """
    if n_per_object < 1:
        return list(scenes)
    out = []
    for scene in scenes:
        def fill(o):
            amap = model.affordances.get(o.category)
            if o.humans or amap is None:
                return o
            return replace(o, humans=tuple(affordance.sample_humans(amap, o, n_per_object, rng)))
        out.append(replace(scene, furniture=tuple(fill(o) for o in scene.furniture),
                           supported_objects=tuple(fill(o) for o in scene.supported_objects)))
    return out


# --- contrastive divergence ---------------------------------------------------

@dataclass(frozen=True)
class LearningRate:
    eta0: float = 0.1
    tau: float = 50.0

    def __call__(self, t):
        return self.eta0 / (1.0 + t / self.tau)


@dataclass
class CDResult:
    weights: Weights
    trace: list


def cd_update(data_losses, sample_losses, eta):
    """One contrastive-divergence step on the weight vector.

    Returns ``eta * (mean sample loss - mean data loss)``; the third CD
    term (the derivative through the chain's own distribution) is dropped.
    """
    return eta * (np.mean(sample_losses, axis=0) - np.mean(data_losses, axis=0))


def cd_learn(corpus, model, sampler_handle=None, schedule=LearningRate(), n_tilde=1, epochs=10,
             batch_size=32, steps_per_cd=20, rng=None, active=None, planner_seed=0,
             max_weight=1e4):
    """Learn the loss weights by CD-``n_tilde`` starting chains at data scenes.

    Parameters
    ----------
    corpus : sequence of SceneLayout
        Data scenes (parse graphs with human positions).
    model : LearnedModel
        Fitted model; its weights are the starting point.
    sampler_handle : callable, optional
        ``handle(scene, model, n_steps, rng) -> scene`` running Metropolis
        moves at temperature 1.  Defaults to :func:`sceneaog.sampler.relax`.
    active : sequence of bool, optional
        Slots whose weights are updated; the others stay fixed.

    Returns
    -------
    CDResult
        Final weights and one trace record per epoch.
    """
    if sampler_handle is None:
        from .sampler import relax as sampler_handle
    rng = np.random.default_rng(rng)
    scenes = list(corpus)
    if not scenes:
        raise ValueError("cd_learn needs data scenes")
    mask = np.ones(N_SLOTS, bool) if active is None else np.asarray(active, bool)
    lam = model.weights.as_array()
    use_ent = bool(mask[ENT] or lam[ENT] != 0)
    ent_cache = HeatmapCache(seed=planner_seed, exact=True)

    def losses(scene):
        return loss_features(scene, model, ent_cache, with_entropy=use_ent)

    data_losses = [losses(s) for s in scenes]
    trace = []
    for t in range(epochs):
        current = model.with_weights(lam)
        idx = np.sort(rng.choice(len(scenes), size=min(batch_size, len(scenes)), replace=False))
        sampled = [sampler_handle(scenes[i], current, n_tilde * steps_per_cd, rng) for i in idx]
        d = np.array([data_losses[i] for i in idx])
        s = np.array([losses(x) for x in sampled])
        eta = schedule(t)
        lam = lam + np.where(mask, cd_update(d, s, eta), 0.0)
        rec = {"epoch": t, "eta": eta, "data_loss": d.mean(axis=0).tolist(),
               "sample_loss": s.mean(axis=0).tolist(), "weights": lam.tolist()}
        trace.append(rec)
        log.info("cd epoch %d: %s", t, dict(zip(SLOTS, np.round(lam, 4))))
        if not np.all(np.isfinite(lam)) or np.max(np.abs(lam)) > max_weight:
            raise CDDivergenceError(f"weights diverged at epoch {t}: {lam.tolist()}", trace)
    return CDResult(Weights.from_array(lam), trace)
