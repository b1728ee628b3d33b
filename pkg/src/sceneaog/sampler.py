"""Scene synthesis: direct structure sampling, then Metropolis-Hastings
over positions, orientations and addresses with simulated annealing."""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, replace

import numpy as np

from .affordance import sample_humans
from .energy import (ENT, HeatmapCache, MissingDistributionError, loss_features, set_key, total_energy,
                     tree_energy)
from .geometry import InvalidLayoutError
from .planner import PlannerParams
from .scene import NIL, TWO_PI, Room, SceneLayout, TreeChoices, ObjectInstance, wrap_angle

MOVE_KINDS = ("q1", "q2", "q3", "none")
MIN_SIZE = 0.05
MIN_ROOM_SIZE = 0.5

Proposal = namedtuple("Proposal", "scene kind log_ratio")


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 20000
    T0: float = 5.0
    move_probs: tuple = (0.45, 0.45, 0.1)
    sigma_xy: float = 0.3
    sigma_theta: float = 0.3
    seed: int = 0
    annealing: bool = True
    humans_per_object: int = 3
    cache_displacement: float = 0.25
    cache_refresh: int = 10
    exact_entropy: bool = False
    hum_mode: str = "neglog"
    planner: PlannerParams = PlannerParams()

    def __post_init__(self):
        p = tuple(float(x) for x in self.move_probs)
        object.__setattr__(self, "move_probs", p)
        if len(p) != 3 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError(f"move probabilities must be 3 non-negative numbers summing to 1, got {p}")
        if not (self.sigma_xy > 0 and self.sigma_theta > 0):
            raise ValueError("proposal scales must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")

    def temperature(self, t):
        return temperature(t, self.T0, self.annealing)


def temperature(t, T0, annealing=True):
    """Logarithmic cooling ``T0 / ln(1 + t)``; iterations start at t = 1."""
    if not annealing:
        return T0
    if t < 1:
        raise ValueError("annealing schedule starts at t = 1")
    return T0 / math.log1p(t)


# --- structure ----------------------------------------------------------------

def _expand(grammar, model, nid, rng, cats, ors, sets):
    node = grammar.nodes[nid]
    if node.kind == "RegularTerminal":
        cats.append(node.category)
    elif node.kind == "And":
        for c in node.children:
            _expand(grammar, model, c, rng, cats, ors, sets)
    elif node.kind == "Or":
        if nid in model.or_dists:
            child = model.or_dists[nid].sample(rng)
        elif len(node.children) == 1:
            child = node.children[0]
        else:
            raise MissingDistributionError(f"model has no or_dists entry for {nid!r}")
        ors.append((nid, child))
        _expand(grammar, model, child, rng, cats, ors, sets)
    elif node.kind == "Set":
        for branch in node.children:
            key = set_key(nid, branch)
            if key not in model.set_count_dists:
                raise MissingDistributionError(f"model has no set_count_dists entry for {key!r}")
            n = int(model.set_count_dists[key].sample(rng))
            sets.append((nid, branch, n))
            for _ in range(n):
                _expand(grammar, model, branch, rng, cats, ors, sets)


def _sample_size(model, category, rng):
    kde = model.size_kdes.get(category)
    if kde is None:
        raise MissingDistributionError(f"model has no size_kdes entry for {category!r}")
    return tuple(max(float(v), MIN_SIZE) for v in kde.sample(rng))


def _pick_target(dist, furniture, self_index, rng):
    """Sample an address: a category from ``dist``, then a uniform instance of it."""
    cat = dist.sample(rng)
    if cat == NIL:
        return None
    idx = [j for j, f in enumerate(furniture) if f.category == cat and j != self_index]
    if not idx:
        return None
    return idx[int(rng.integers(len(idx)))]


def _uniform_on_top(support, rng):
    u, v = (rng.random(2) - 0.5) * (support.size[0], support.size[1])
    x, y = support.to_world(u, v)
    return x, y, support.top


def with_humans(obj, model, n, rng):
    amap = model.affordances.get(obj.category)
    if amap is None or n < 1:
        return obj
    return replace(obj, humans=tuple(sample_humans(amap, obj, n, rng)))


def sample_structure(model, scene_type, rng, humans_per_object=3):
    """Sample a parse tree and internal attributes, with random placement.

    Room size comes from the room KDE, Or choices and Set counts from their
    categoricals, instance sizes from size KDEs.  Furniture is placed
    uniformly in the room with uniform yaw; addressed objects sit on their
    supporter's top; humans are drawn from the affordance maps.
    """
    grammar = model.grammar
    if scene_type not in grammar.scene_types:
        raise ValueError(f"unknown scene type {scene_type!r}; known: {list(grammar.scene_types)}")
    rng = np.random.default_rng(rng)
    kde = model.room_size_kdes.get(scene_type)
    if kde is None:
        raise MissingDistributionError(f"model has no room_size_kdes entry for {scene_type!r}")
    room = Room(tuple(max(float(v), MIN_ROOM_SIZE) for v in kde.sample(rng)), scene_type)

    cats, ors, sets = [], [], []
    if grammar.nodes[grammar.root].kind == "Or":
        ors.append((grammar.root, scene_type))
    _expand(grammar, model, scene_type, rng, cats, ors, sets)

    x0, y0, x1, y1 = room.bounds
    furniture, objects = [], []
    for cat in cats:
        size = _sample_size(model, cat, rng)
        if grammar.role_of(cat) == "furniture":
            x, y = x0 + rng.random() * (x1 - x0), y0 + rng.random() * (y1 - y0)
            furniture.append(ObjectInstance(cat, size, (x, y, 0.0), rng.random() * TWO_PI))
        else:
            objects.append((cat, size))

    for j, f in enumerate(furniture):
        dist = model.address_dists.get(f.category)
        if dist is not None:
            furniture[j] = replace(f, address=_pick_target(dist, furniture, j, rng))
    placed = []
    for cat, size in objects:
        dist = model.address_dists.get(cat)
        addr = _pick_target(dist, furniture, -1, rng) if dist is not None else None
        if addr is not None:
            pos = _uniform_on_top(furniture[addr], rng)
        else:
            pos = (x0 + rng.random() * (x1 - x0), y0 + rng.random() * (y1 - y0), 0.0)
        placed.append(ObjectInstance(cat, size, pos, rng.random() * TWO_PI, addr))

    furniture = [with_humans(f, model, humans_per_object, rng) for f in furniture]
    placed = [with_humans(o, model, humans_per_object, rng) for o in placed]
    return SceneLayout(room, tuple(furniture), tuple(placed), TreeChoices(tuple(ors), tuple(sets)))


# --- proposals ----------------------------------------------------------------

def _rotate(px, py, pivot, dyaw):
    """Rotate a point about ``pivot`` in the yaw sense (clockwise seen from +z)."""
    c, s = math.cos(dyaw), math.sin(dyaw)
    dx, dy = px - pivot[0], py - pivot[1]
    return pivot[0] + c * dx + s * dy, pivot[1] - s * dx + c * dy


def rigid_move(obj, dx, dy, dyaw=0.0, pivot=None):
    """Rotate ``obj`` (and its humans) by ``dyaw`` about ``pivot``, then translate."""
    if pivot is None:
        pivot = obj.xy
    x, y = _rotate(obj.position[0], obj.position[1], pivot, dyaw)
    humans = tuple((hx + dx, hy + dy) for hx, hy in
                   (_rotate(h[0], h[1], pivot, dyaw) for h in obj.humans))
    return replace(obj, position=(x + dx, y + dy, obj.position[2]), yaw=obj.yaw + dyaw, humans=humans)


def _clamp_on_top(obj, support):
    """Project an object's center onto the top face of ``support``."""
    u, v = support.to_local(obj.position[0], obj.position[1])
    hw, hl = 0.5 * support.size[0], 0.5 * support.size[1]
    cu, cv = min(max(u, -hw), hw), min(max(v, -hl), hl)
    x, y = support.to_world(cu, cv)
    moved = rigid_move(obj, x - obj.position[0], y - obj.position[1])
    return replace(moved, position=(moved.position[0], moved.position[1], support.top))


def movable_instances(scene):
    return [("f", i) for i in range(len(scene.furniture))] + \
        [("o", k) for k in range(len(scene.supported_objects))]


def _move_furniture(scene, i, moved):
    old = scene.furniture[i]
    dx, dy = moved.position[0] - old.position[0], moved.position[1] - old.position[1]
    dyaw = moved.yaw - old.yaw
    furniture = list(scene.furniture)
    furniture[i] = moved
    objects = tuple(rigid_move(o, dx, dy, dyaw, old.xy) if o.address == i else o
                    for o in scene.supported_objects)
    return replace(scene, furniture=tuple(furniture), supported_objects=objects)


def _move_object(scene, k, moved):
    objects = list(scene.supported_objects)
    objects[k] = moved
    return replace(scene, supported_objects=tuple(objects))


def _target_prob(dist, furniture, self_index, target):
    """Probability that :func:`_pick_target` returns ``target``."""
    avail = {}
    for j, f in enumerate(furniture):
        if j != self_index:
            avail[f.category] = avail.get(f.category, 0) + 1
    if target is None:
        return dist.prob(NIL) + sum(p for c, p in zip(dist.outcomes, dist.probs)
                                    if c != NIL and c not in avail)
    cat = furniture[target].category
    return dist.prob(cat) / avail[cat]


def _readdress_object(scene, k, new):
    o = scene.supported_objects[k]
    if new == o.address:
        return o
    if new is None:
        moved = o
        return replace(moved, position=(moved.position[0], moved.position[1], 0.0), address=None)
    target = scene.furniture[new]
    if o.address is not None:
        # keep the pose relative to the supporter
        old = scene.furniture[o.address]
        u, v = old.to_local(o.position[0], o.position[1])
        dyaw = target.yaw - old.yaw
    else:
        u, v, dyaw = 0.0, 0.0, 0.0
    x, y = target.to_world(u, v)
    moved = rigid_move(o, 0.0, 0.0, dyaw)
    moved = rigid_move(moved, x - o.position[0], y - o.position[1])
    moved = replace(moved, address=new)
    return _clamp_on_top(moved, target)


def propose(scene, model, config, rng):
    """Draw one move.

    q1 translates a random instance, q2 rotates it, q3 resamples one
    address.  Supported objects and human positions move rigidly with
    their furniture.  ``log_ratio`` is the log Hastings correction
    ``log q(x | x') - log q(x' | x)``, zero for the symmetric q1 and q2.
    """
    cands = movable_instances(scene)
    if not cands:
        return Proposal(scene, "none", 0.0)
    kind = MOVE_KINDS[int(rng.choice(3, p=np.asarray(config.move_probs)))]
    if kind == "q3":
        eligible = [c for c in cands if model.address_dists.get(
            (scene.furniture if c[0] == "f" else scene.supported_objects)[c[1]].category) is not None]
        if not eligible:
            return Proposal(scene, "none", 0.0)
        which, idx = eligible[int(rng.integers(len(eligible)))]
        obj = (scene.furniture if which == "f" else scene.supported_objects)[idx]
        dist = model.address_dists[obj.category]
        self_index = idx if which == "f" else -1
        new = _pick_target(dist, scene.furniture, self_index, rng)
        q_fwd = _target_prob(dist, scene.furniture, self_index, new)
        q_rev = _target_prob(dist, scene.furniture, self_index, obj.address)
        log_ratio = math.log(q_rev) - math.log(q_fwd) if q_rev > 0 else -math.inf
        if which == "f":
            furniture = list(scene.furniture)
            furniture[idx] = replace(obj, address=new)
            return Proposal(replace(scene, furniture=tuple(furniture)), kind, log_ratio)
        return Proposal(_move_object(scene, idx, _readdress_object(scene, idx, new)), kind, log_ratio)

    which, idx = cands[int(rng.integers(len(cands)))]
    if which == "f":
        obj = scene.furniture[idx]
        if kind == "q1":
            d = rng.normal(0.0, config.sigma_xy, 2)
            moved = rigid_move(obj, float(d[0]), float(d[1]))
        else:
            moved = rigid_move(obj, 0.0, 0.0, float(rng.normal(0.0, config.sigma_theta)))
        return Proposal(_move_furniture(scene, idx, moved), kind, 0.0)
    obj = scene.supported_objects[idx]
    if kind == "q1":
        scale = config.sigma_xy / 3.0 if obj.address is not None else config.sigma_xy
        d = rng.normal(0.0, scale, 2)
        moved = rigid_move(obj, float(d[0]), float(d[1]))
        if obj.address is not None:
            moved = _clamp_on_top(moved, scene.furniture[obj.address])
    else:
        moved = rigid_move(obj, 0.0, 0.0, float(rng.normal(0.0, config.sigma_theta)))
    return Proposal(_move_object(scene, idx, moved), kind, 0.0)


# --- acceptance and the chain -------------------------------------------------

def acceptance_probability(e_old, e_new, T, log_ratio=0.0):
    """Metropolis-Hastings acceptance ``min(1, exp((e_old - e_new) / T) * ratio)``."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    if e_new == math.inf:
        return 0.0
    if e_old == math.inf:
        return 1.0
    a = (e_old - e_new) / T + log_ratio
    return 1.0 if a >= 0 else math.exp(a)


def accept(e_old, e_new, T, rng, log_ratio=0.0):
    """Accept with probability :func:`acceptance_probability`.

    A uniform variate is drawn only when the probability is below one.
    """
    p = acceptance_probability(e_old, e_new, T, log_ratio)
    if p >= 1.0:
        return True
    if p <= 0.0:
        return False
    return bool(rng.random() < p)


class ChainTrace:
    """Per-iteration records of one chain, stored column-wise."""

    columns = ("t", "energy", "temperature", "accepted", "kind", "best_energy")

    def __init__(self, n):
        self.t = np.arange(1, n + 1)
        self.energy = np.empty(n)
        self.temperature = np.empty(n)
        self.accepted = np.zeros(n, dtype=bool)
        self.kind = np.zeros(n, dtype=np.int8)
        self.best_energy = np.empty(n)
        self.initial_energy = math.inf
        self.best_scene = None
        self.final_scene = None
        self.final_energy = math.inf

    def __len__(self):
        return len(self.t)

    @property
    def best(self):
        return float(self.best_energy[-1]) if len(self) else self.initial_energy

    def acceptance_rate(self):
        return float(self.accepted.mean()) if len(self) else 0.0

    def to_csv(self):
        lines = [",".join(self.columns)]
        for i in range(len(self)):
            lines.append(f"{self.t[i]},{self.energy[i]!r},{self.temperature[i]!r},{int(self.accepted[i])},"
                         f"{MOVE_KINDS[self.kind[i]]},{self.best_energy[i]!r}")
        return "\n".join(lines) + "\n"


def run_chain(state, energy_fn, propose_fn, temperature_fn, n_iters, rng,
              on_accept=None, callback=None, extra_fn=None):
    """Generic Metropolis-Hastings loop with best-so-far tracking.

    ``propose_fn(state, rng)`` returns ``(state', kind, log_ratio)`` and
    ``temperature_fn(t)`` the temperature at iteration ``t >= 1``.
    ``callback(t, state)`` sees the state after every iteration.

    When ``extra_fn`` is given the target energy is ``energy_fn + extra_fn``
    and acceptance is delayed: a candidate must first pass a Metropolis
    test on ``energy_fn`` alone, and only then is the costly ``extra_fn``
    evaluated for a second test on its difference.  The product of the two
    acceptance probabilities satisfies detailed balance for the full energy.
    """
    trace = ChainTrace(n_iters)
    e = energy_fn(state)
    x = extra_fn(state) if extra_fn is not None and e != math.inf else 0.0
    if on_accept is not None:
        on_accept()
    trace.initial_energy = e + x
    best, best_e = state, e + x
    for i in range(n_iters):
        t = i + 1
        T = temperature_fn(t)
        new, kind, log_ratio = propose_fn(state, rng)
        ok = False
        if kind != "none":
            e_new = energy_fn(new)
            ok = accept(e, e_new, T, rng, log_ratio)
            if ok and extra_fn is not None:
                x_new = extra_fn(new)
                ok = accept(x, x_new, T, rng) if e != math.inf else True
            else:
                x_new = 0.0
        if ok:
            state, e, x = new, e_new, x_new
            if on_accept is not None:
                on_accept()
            if e + x < best_e:
                best, best_e = state, e + x
        trace.energy[i] = e + x
        trace.temperature[i] = T
        trace.accepted[i] = ok
        trace.kind[i] = MOVE_KINDS.index(kind)
        trace.best_energy[i] = best_e
        if callback is not None:
            callback(t, state)
    trace.best_scene, trace.final_scene, trace.final_energy = best, state, e + x
    return trace


def _inside_room(scene):
    return all(scene.room.contains(o.position[0], o.position[1]) for o in scene.instances)


def scene_energy_fn(model, cache=None, weights=None, hum_mode="neglog"):
    """Energy of a chain state; states with a center outside the room get +inf."""
    def energy(scene):
        if cache is not None:
            cache.discard()
        if not _inside_room(scene):
            return math.inf
        try:
            return total_energy(scene, model, cache, weights, hum_mode)
        except InvalidLayoutError:
            return math.inf
    return energy


def staged_energy_fns(model, cache, weights=None, hum_mode="neglog"):
    """Split the energy into a cheap part and the trajectory-entropy part.

    Returns ``(cheap, extra)``; ``extra`` is None when the entropy weight
    is zero.
    """
    lam = (weights if weights is not None else model.weights).as_array()
    lam_ent = float(lam[ENT])
    lam_cheap = lam.copy()
    lam_cheap[ENT] = 0.0
    tree_memo = {}

    def cheap(scene):
        cache.discard()
        if not _inside_room(scene):
            return math.inf
        try:
            losses = loss_features(scene, model, None, hum_mode, with_entropy=False)
        except InvalidLayoutError:
            return math.inf
        # sizes and tree choices never change under q1-q3, so the tree term is reused
        key = (scene.tree_choices, tuple((o.category, o.size) for o in scene.instances))
        if tree_memo.get("key") != key:
            tree_memo["key"], tree_memo["value"] = key, tree_energy(scene, model)
        return tree_memo["value"] + float(np.dot(lam_cheap, losses))

    def extra(scene):
        cache.discard()
        return lam_ent * cache.l_ent(scene) if len(scene.furniture) >= 2 else 0.0

    return cheap, (extra if lam_ent != 0.0 else None)


def _cache_for(config, seed):
    return HeatmapCache(config.planner, seed, config.cache_displacement, config.cache_refresh,
                        config.exact_entropy)


def run_from(scene, model, config, rng, n_iters=None, fixed_temperature=None, callback=None):
    """Run the scene chain from ``scene``; returns the :class:`ChainTrace`."""
    rng = np.random.default_rng(rng)
    planner_seed = int(rng.integers(2 ** 63))
    cache = _cache_for(config, planner_seed)
    energy, extra = staged_energy_fns(model, cache, hum_mode=config.hum_mode)
    if fixed_temperature is not None:
        def temp(t):
            return fixed_temperature
    else:
        temp = config.temperature
    return run_chain(scene, energy, lambda s, r: propose(s, model, config, r), temp,
                     n_iters or config.iterations, rng, cache.accept, callback, extra)


def relax(scene, model, n_steps, rng, config=SamplerConfig()):
    """``n_steps`` Metropolis moves at temperature 1 from ``scene``; returns the last state."""
    return run_from(scene, model, config, rng, n_steps, fixed_temperature=1.0).final_scene


def synthesize(model, scene_type, config=SamplerConfig(), rng=None):
    """Sample a structure, then anneal it; returns ``(best scene, trace)``."""
    rng = np.random.default_rng(config.seed if rng is None else rng)
    scene = sample_structure(model, scene_type, rng, config.humans_per_object)
    trace = run_from(scene, model, config, rng)
    return trace.best_scene, trace
