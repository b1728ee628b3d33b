"""Parse-graph energy: parse-tree term plus weighted clique losses.

The loss vector has eight slots in a fixed order::

    f-col  f-ent  o-hum  o-add  g-hum  g-add  r-dis  r-ori

and the total energy is ``tree_energy + dot(weights, losses)``.  The
partition function is never needed: it cancels in Metropolis-Hastings and
in contrastive divergence.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .affordance import EPS_AFF, human_prob, instance_humans
from .geometry import nearest_wall, outside_room_volume, overlap_volume
from .planner import PlannerParams, activity_heatmap, l_ent
from .prob import EPS_P
from .scene import NIL, wrap_pi

SLOTS = ("f-col", "f-ent", "o-hum", "o-add", "g-hum", "g-add", "r-dis", "r-ori")
N_SLOTS = len(SLOTS)
ENT = SLOTS.index("f-ent")
MIN_WALL_DISTANCE = 1e-3


class MissingDistributionError(KeyError):
    pass


@dataclass(frozen=True)
class Weights:
    lambda_f: tuple = (0.0, 0.0)
    lambda_o: tuple = (0.0, 0.0)
    lambda_g: tuple = (0.0, 0.0)
    lambda_r: tuple = (0.0, 0.0)

    def __post_init__(self):
        for name in ("lambda_f", "lambda_o", "lambda_g", "lambda_r"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 2 or not all(math.isfinite(x) for x in v):
                raise ValueError(f"{name} must be two finite numbers, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_array(cls, lam):
        lam = [float(x) for x in lam]
        if len(lam) != N_SLOTS:
            raise ValueError(f"expected {N_SLOTS} weights, got {len(lam)}")
        return cls(tuple(lam[0:2]), tuple(lam[2:4]), tuple(lam[4:6]), tuple(lam[6:8]))

    @classmethod
    def from_dict(cls, d):
        return cls.from_array([d.get(s, 0.0) for s in SLOTS])

    def as_array(self):
        return np.array(self.lambda_f + self.lambda_o + self.lambda_g + self.lambda_r)

    def as_dict(self):
        return dict(zip(SLOTS, self.as_array().tolist()))


@dataclass(frozen=True)
class CliqueSet:
    furniture: tuple        # C_f: furniture indices
    support: tuple          # C_o: (furniture index, object index)
    group: tuple            # C_g: (core furniture index, associated furniture index)
    room: tuple             # C_r: furniture indices


def build_cliques(scene):
    nf = len(scene.furniture)
    support = tuple((o.address, k) for k, o in enumerate(scene.supported_objects) if o.address is not None)
    group = tuple((f.address, j) for j, f in enumerate(scene.furniture) if f.address is not None)
    return CliqueSet(tuple(range(nf)), support, group, tuple(range(nf)))


class HeatmapCache:
    """Reuse of the trajectory-entropy loss between nearby chain states.

    The cache is owned by one chain.  ``l_ent(scene)`` evaluates a
    candidate state and remembers it as pending; ``accept()`` promotes the
    pending value to the chain's current state.  A fresh heatmap is
    planned when any piece of furniture moved more than
    ``max_displacement`` since the last plan, after ``refresh_every``
    accepted moves, or always when ``exact`` is set.
    """

    def __init__(self, params=PlannerParams(), seed=0, max_displacement=0.25,
                 refresh_every=10, exact=False, memo_size=4096):
        self.params = params
        self.seed = int(seed)
        self.max_displacement = max_displacement
        self.refresh_every = refresh_every
        self.exact = exact
        self._memo = OrderedDict()
        self._memo_size = memo_size
        self._ref = None
        self._value = 0.0
        self._accepted = 0
        self._pending = None
        self.n_plans = 0

    @staticmethod
    def _poses(scene):
        return tuple((f.category, f.position[0], f.position[1], f.yaw, f.size) for f in scene.furniture)

    def compute(self, scene):
        key = self._poses(scene)
        v = self._memo.get(key)
        if v is None:
            v = l_ent(activity_heatmap(scene, self.params, self.seed))
            self.n_plans += 1
            self._memo[key] = v
            if len(self._memo) > self._memo_size:
                self._memo.popitem(last=False)
        return v

    def _stale(self, poses):
        ref = self._ref
        if ref is None or len(ref) != len(poses) or self._accepted >= self.refresh_every:
            return True
        for a, b in zip(ref, poses):
            if a[0] != b[0] or a[4] != b[4]:
                return True
            # rotation sweeps the footprint corners, count that as displacement
            turn = 0.5 * max(b[4][0], b[4][1]) * abs(wrap_pi(b[3] - a[3]))
            if math.hypot(b[1] - a[1], b[2] - a[2]) + turn > self.max_displacement:
                return True
        return False

    def l_ent(self, scene):
        poses = self._poses(scene)
        if self.exact or self._stale(poses):
            v = self.compute(scene)
            self._pending = (poses, v, True)
        else:
            v = self._value
            self._pending = (poses, v, False)
        return v

    def discard(self):
        self._pending = None

    def accept(self):
        if self._pending is None:
            return
        poses, v, fresh = self._pending
        if fresh:
            self._ref, self._value, self._accepted = poses, v, 0
        else:
            self._accepted += 1
        self._pending = None


def _table(model, name, key):
    table = getattr(model, name)
    try:
        return table[key]
    except KeyError:
        raise MissingDistributionError(f"model has no {name} entry for {key!r}") from None


def l_hum(amap, humans, furniture, mode="neglog", eps=EPS_AFF):
    best = max((human_prob(amap, h, furniture, eps) for h in humans), default=0.0)
    if mode == "literal":
        return best
    return -math.log(best + eps)


def l_add(dist, target_category, eps=EPS_P):
    return -dist.logprob(target_category if target_category is not None else NIL, eps)


def loss_features(scene, model, heatmap_cache=None, hum_mode="neglog", with_entropy=True):
    """Loss vector of the scene's contextual relations (slot order: SLOTS)."""
    furn = scene.furniture
    objs = scene.supported_objects
    out = np.zeros(N_SLOTS)

    col = 0.0
    for i in range(len(furn)):
        for j in range(i + 1, len(furn)):
            col += overlap_volume(furn[i], furn[j])
    # ordered pairs count each overlap twice
    col *= 2.0
    for f in furn:
        col += outside_room_volume(f, scene.room)
    out[0] = col

    if with_entropy and len(furn) >= 2:
        out[1] = heatmap_cache.l_ent(scene) if heatmap_cache is not None else \
            l_ent(activity_heatmap(scene))

    cliques = build_cliques(scene)
    for fi, ok in cliques.support:
        f, o = furn[fi], objs[ok]
        amap = _table(model, "affordances", f.category)
        out[2] += l_hum(amap, instance_humans(o), f, hum_mode)
        out[3] += l_add(_table(model, "address_dists", o.category), f.category)

    for ci, j in cliques.group:
        core, f = furn[ci], furn[j]
        amap = _table(model, "affordances", core.category)
        out[4] += l_hum(amap, instance_humans(f), core, hum_mode)
        out[5] += l_add(_table(model, "address_dists", f.category), core.category)

    for f in furn:
        d, rel = nearest_wall(f, scene.room)
        out[6] -= _table(model, "wall_dist", f.category).logpdf(max(d, MIN_WALL_DISTANCE))
        out[7] -= _table(model, "wall_orient", f.category).logpdf(rel)
    return out


def set_key(set_id, branch_id):
    return f"{set_id}>{branch_id}"


def tree_energy(scene, model, eps=EPS_P):
    """Energy of the parse tree: Or choices, Set counts and terminal sizes."""
    e = 0.0
    for node, child in scene.tree_choices.or_choices:
        e -= _table(model, "or_dists", node).logprob(child, eps)
    for node, branch, count in scene.tree_choices.set_counts:
        e -= _table(model, "set_count_dists", set_key(node, branch)).logprob(count, eps)
    for obj in scene.instances:
        e -= _table(model, "size_kdes", obj.category).logpdf(obj.size)
    return e


def total_energy(scene, model, heatmap_cache=None, weights=None, hum_mode="neglog"):
    lam = (weights if weights is not None else model.weights).as_array()
    losses = loss_features(scene, model, heatmap_cache, hum_mode, with_entropy=lam[ENT] != 0.0)
    return tree_energy(scene, model) + float(np.dot(lam, losses))
