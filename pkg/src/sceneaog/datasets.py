"""Procedural fixture data: a small bedroom grammar and a corpus generator.

The corpus is drawn from known rules: beds, wardrobes and desks stand
against walls facing into the room, nightstands flank the bed, a chair
faces the desk and lamps stand on nightstands.
"""
from __future__ import annotations

import math

import numpy as np

from .formats import CorpusInstance, CorpusScene
from .geometry import overlap_volume
from .learning import GroupingRules
from .scene import NIL, Grammar, NodeSpec, ObjectInstance

BASE_SIZES = {
    "bed": (1.6, 2.0, 0.5),
    "nightstand": (0.45, 0.4, 0.55),
    "wardrobe": (1.2, 0.6, 2.0),
    "desk": (1.2, 0.6, 0.75),
    "chair": (0.5, 0.5, 0.9),
    "lamp": (0.2, 0.2, 0.4),
}
ROOM_HEIGHT = 2.7
WALL_GAP = (0.02, 0.15)
YAW_NOISE = 0.05
_NORMAL_YAW = {"-x": math.pi / 2, "+x": -math.pi / 2, "-y": 0.0, "+y": math.pi}


def make_bedroom_grammar():
    """Bedroom grammar with five furniture branches and one object branch."""
    n = NodeSpec
    nodes = [
        n("scene", "Or", ("bedroom",)),
        n("bedroom", "And", ("furniture", "objects")),
        n("furniture", "Set", ("bed", "nightstand_g", "wardrobe", "desk", "chair_g")),
        n("bed", "RegularTerminal", category="bed", role="furniture"),
        n("nightstand_g", "And", ("nightstand", "nightstand_addr")),
        n("nightstand", "RegularTerminal", category="nightstand", role="furniture"),
        n("nightstand_addr", "AddressTerminal", candidates=("bed", NIL)),
        n("wardrobe", "RegularTerminal", category="wardrobe", role="furniture"),
        n("desk", "RegularTerminal", category="desk", role="furniture"),
        n("chair_g", "And", ("chair", "chair_addr")),
        n("chair", "RegularTerminal", category="chair", role="furniture"),
        n("chair_addr", "AddressTerminal", candidates=("desk", NIL)),
        n("objects", "Set", ("lamp_g",)),
        n("lamp_g", "And", ("lamp", "lamp_addr")),
        n("lamp", "RegularTerminal", category="lamp", role="object"),
        n("lamp_addr", "AddressTerminal", candidates=("nightstand", "desk", NIL)),
    ]
    return Grammar("scene", {x.id: x for x in nodes})


def bedroom_rules():
    return GroupingRules({"nightstand": ("bed",), "chair": ("desk",)})


def _jitter_size(cat, rng, rel=0.05):
    return tuple(float(b * (1.0 + rel * rng.standard_normal())) for b in BASE_SIZES[cat])


def _against_wall(size, wall, room, rng, offset=None):
    """Center and yaw of a piece standing against ``wall``, facing inward."""
    W, L = room[0], room[1]
    w, l = size[0], size[1]
    along = W if wall in ("-y", "+y") else L
    if along < w:
        return None
    s = rng.uniform(w / 2, along - w / 2) if offset is None else offset
    d = l / 2 + rng.uniform(*WALL_GAP)
    x, y = {"-x": (d, s), "+x": (W - d, s), "-y": (s, d), "+y": (s, L - d)}[wall]
    return (x, y), _NORMAL_YAW[wall]


def _along(wall, x, y):
    return y if wall in ("-x", "+x") else x


def _free(obj, placed, margin=0.05):
    grown = ObjectInstance(obj.category, (obj.size[0] + margin, obj.size[1] + margin, obj.size[2]),
                           obj.position, obj.yaw)
    return all(overlap_volume(grown, p) <= 0.0 for p in placed)


def _inside(obj, room):
    from .geometry import footprint
    return all(-1e-9 <= x <= room[0] + 1e-9 and -1e-9 <= y <= room[1] + 1e-9 for x, y in footprint(obj))


def _humans_in_front(obj, rng, n, dist=0.45, spread=0.1):
    out = []
    for _ in range(n):
        u = rng.uniform(-0.3, 0.3) * obj.size[0]
        v = obj.size[1] / 2 + dist + spread * rng.standard_normal()
        out.append(obj.to_world(u, v))
    return tuple(out)


def _humans_beside_bed(bed, rng, n):
    out = []
    for _ in range(n):
        side = 1 if rng.random() < 0.5 else -1
        u = side * (bed.size[0] / 2 + 0.35 + 0.1 * rng.standard_normal())
        v = rng.uniform(-0.2, 0.6) * bed.size[1] / 2
        out.append(bed.to_world(u, v))
    return tuple(out)


def _try_scene(rng, fixed_counts, humans):
    room = (float(rng.uniform(3.6, 5.0)), float(rng.uniform(3.6, 5.0)), ROOM_HEIGHT)
    walls = list(_NORMAL_YAW)
    furn, supports, addr = [], [], []

    def place(cat, wall, offset=None):
        size = _jitter_size(cat, rng)
        spot = _against_wall(size, wall, room, rng, offset)
        if spot is None:
            return None
        (x, y), yaw = spot
        obj = ObjectInstance(cat, size, (x, y, 0.0), yaw + YAW_NOISE * rng.standard_normal())
        if not _inside(obj, room) or not _free(obj, furn):
            return None
        return obj

    bed_wall = walls[int(rng.integers(4))]
    bed = place("bed", bed_wall)
    if bed is None:
        return None
    furn.append(bed)
    n_night = 1 if fixed_counts else int(rng.choice([1, 2], p=[0.5, 0.5]))
    sides = [1, -1] if n_night == 2 else [1 if rng.random() < 0.5 else -1]
    nights = []
    for side in sides:
        # offset along the bed's own width axis, whichever wall it stands on
        px, py = bed.to_world(side * (bed.size[0] / 2 + 0.3), 0.0)
        ns = place("nightstand", bed_wall, _along(bed_wall, px, py))
        if ns is None:
            return None
        furn.append(ns)
        nights.append(len(furn) - 1)
    others = [w for w in walls if w != bed_wall]
    rng.shuffle(others)
    for cat, wall in zip(("wardrobe", "desk"), others):
        obj = None
        for _ in range(20):
            obj = place(cat, wall)
            if obj is not None:
                break
        if obj is None:
            return None
        furn.append(obj)
    desk = furn[-1]
    if fixed_counts or rng.random() < 0.9:
        size = _jitter_size("chair", rng)
        v = desk.size[1] / 2 + size[1] / 2 + 0.05 + 0.05 * rng.random()
        x, y = desk.to_world(0.1 * rng.standard_normal(), v)
        chair = ObjectInstance("chair", size, (x, y, 0.0), desk.yaw + math.pi + 0.1 * rng.standard_normal())
        if not _inside(chair, room) or not _free(chair, [f for f in furn if f is not desk]):
            return None
        furn.append(chair)
    for ni in nights:
        ns = furn[ni]
        size = _jitter_size("lamp", rng)
        x, y = ns.to_world(*(0.05 * rng.standard_normal(2)))
        supports.append(ObjectInstance("lamp", size, (x, y, ns.top), rng.uniform(0, 2 * math.pi)))
        addr.append(ni)

    if humans:
        for k, f in enumerate(furn):
            if f.category == "bed":
                furn[k] = ObjectInstance(f.category, f.size, f.position, f.yaw, None,
                                         _humans_beside_bed(f, rng, 2))
            elif f.category in ("wardrobe", "nightstand"):
                furn[k] = ObjectInstance(f.category, f.size, f.position, f.yaw, None,
                                         _humans_in_front(f, rng, 1))
    insts = [CorpusInstance(f.category, f.size, f.position, f.yaw, None, f.humans) for f in furn]
    for o, a in zip(supports, addr):
        insts.append(CorpusInstance(o.category, o.size, o.position, o.yaw, a, o.humans))
    return room, tuple(insts)


def make_bedroom_corpus(n_scenes=500, random_state=None, fixed_counts=False, humans=True):
    """Generate ``n_scenes`` bedroom corpus scenes.

    Parameters
    ----------
    fixed_counts : bool
        If true every scene has exactly one bed, nightstand, wardrobe, desk
        and chair (five furniture pieces) and one lamp.
    humans : bool
        Attach human positions beside the bed and in front of wardrobes and
        nightstands.
    """
    rng = np.random.default_rng(random_state)
    out = []
    width = max(len(str(n_scenes)), 4)
    while len(out) < n_scenes:
        made = _try_scene(rng, fixed_counts, humans)
        if made is None:
            continue
        room, insts = made
        out.append(CorpusScene(f"bedroom_{len(out):0{width}d}", "bedroom", room, insts))
    return out
