"""Grammar nodes, object instances and scene layouts (parse graphs).

All types are frozen; moves in the sampler build new instances with
:func:`dataclasses.replace`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

TWO_PI = 2.0 * math.pi

NODE_KINDS = ("And", "Or", "Set", "RegularTerminal", "AddressTerminal")
ROLES = ("furniture", "object")
NIL = "nil"


class GrammarError(ValueError):
    pass


def wrap_angle(theta):
    """Wrap an angle into [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


def wrap_pi(theta):
    """Wrap an angle into (-pi, pi]."""
    t = math.fmod(theta + math.pi, TWO_PI)
    if t <= 0.0:
        t += TWO_PI
    return t - math.pi


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    children: tuple = ()
    category: Optional[str] = None
    role: Optional[str] = None
    candidates: tuple = ()

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise GrammarError(f"node {self.id!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @property
    def is_terminal(self):
        return self.kind in ("RegularTerminal", "AddressTerminal")


@dataclass(frozen=True)
class Grammar:
    """Spatial And-Or grammar: a root node and the node table.

    The root is either an Or-node over scene types or a single scene-type
    node.  Or-nodes, Set-nodes and address terminals get their
    distributions from a :class:`~sceneaog.learning.LearnedModel`.
    """

    root: str
    nodes: dict

    def __post_init__(self):
        if self.root not in self.nodes:
            raise GrammarError(f"root {self.root!r} is not a node")
        for node in self.nodes.values():
            if node.kind in ("And", "Or", "Set") and not node.children:
                raise GrammarError(f"non-terminal {node.id!r} has no children")
            if node.is_terminal and node.children:
                raise GrammarError(f"terminal {node.id!r} has children")
            if node.kind == "RegularTerminal":
                if not node.category:
                    raise GrammarError(f"terminal {node.id!r} has no category")
                if node.role not in ROLES:
                    raise GrammarError(f"terminal {node.id!r}: role must be one of {ROLES}")
            if node.kind == "AddressTerminal" and NIL not in node.candidates:
                raise GrammarError(f"address {node.id!r} must list {NIL!r} as a candidate")
            for c in node.children:
                if c not in self.nodes:
                    raise GrammarError(f"node {node.id!r}: unknown child {c!r}")
        self._check_acyclic()

    def _check_acyclic(self):
        state = {}

        def visit(nid):
            s = state.get(nid)
            if s == 1:
                raise GrammarError(f"cycle through node {nid!r}")
            if s == 2:
                return
            state[nid] = 1
            for c in self.nodes[nid].children:
                visit(c)
            state[nid] = 2

        visit(self.root)

    @property
    def scene_types(self):
        root = self.nodes[self.root]
        if root.kind == "Or":
            return root.children
        return (self.root,)

    def terminals(self, start=None):
        """Regular terminal nodes reachable from ``start`` (default: root)."""
        seen, out, stack = set(), [], [start or self.root]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            node = self.nodes[nid]
            if node.kind == "RegularTerminal":
                out.append(node)
            stack.extend(reversed(node.children))
        return sorted(out, key=lambda n: n.id)

    def categories(self, role=None, start=None):
        return sorted({n.category for n in self.terminals(start) if role is None or n.role == role})

    def role_of(self, category):
        for n in self.nodes.values():
            if n.kind == "RegularTerminal" and n.category == category:
                return n.role
        raise GrammarError(f"category {category!r} not in grammar")

    def address_node_for(self, terminal_id):
        """Address terminal paired with a regular terminal under the same And-node."""
        for n in self.nodes.values():
            if n.kind == "And" and terminal_id in n.children:
                for c in n.children:
                    if self.nodes[c].kind == "AddressTerminal":
                        return self.nodes[c]
        return None

    def paths(self, scene_type):
        """Map category -> node path from the scene-type node to its terminal.

        Raises if a category is reachable along more than one path, since
        corpus scenes would then not determine their own parse tree.
        """
        out = {}

        def walk(nid, path):
            node = self.nodes[nid]
            path = path + (nid,)
            if node.kind == "RegularTerminal":
                if node.category in out and out[node.category] != path:
                    raise GrammarError(
                        f"category {node.category!r} reachable by several paths in {scene_type!r}")
                out[node.category] = path
                return
            for c in node.children:
                walk(c, path)

        walk(scene_type, ())
        return out


@dataclass(frozen=True)
class ObjectInstance:
    category: str
    size: tuple
    position: tuple
    yaw: float = 0.0
    address: Optional[int] = None
    humans: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "humans", tuple((float(x), float(y)) for x, y in self.humans))
        if len(self.size) != 3 or len(self.position) != 3:
            raise ValueError("size and position must have three components")
        if min(self.size) <= 0.0:
            raise ValueError(f"{self.category}: sizes must be positive, got {self.size}")

    @property
    def xy(self):
        return self.position[0], self.position[1]

    @property
    def top(self):
        return self.position[2] + self.size[2]

    def facing(self):
        """Unit facing vector; yaw 0 faces +y, yaw pi/2 faces +x."""
        return math.sin(self.yaw), math.cos(self.yaw)

    def to_local(self, x, y):
        """World point -> object frame (object at origin, facing +y)."""
        dx, dy = x - self.position[0], y - self.position[1]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return c * dx - s * dy, s * dx + c * dy

    def to_world(self, u, v):
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return self.position[0] + c * u + s * v, self.position[1] - s * u + c * v


@dataclass(frozen=True)
class Room:
    size: tuple
    scene_type: str
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(self.size) != 3 or min(self.size) <= 0.0:
            raise ValueError(f"room size must be three positive numbers, got {self.size}")

    @property
    def bounds(self):
        x0, y0 = self.origin
        return x0, y0, x0 + self.size[0], y0 + self.size[1]

    def contains(self, x, y):
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True)
class TreeChoices:
    """Or selections and Set counts that produced a parse tree."""

    or_choices: tuple = ()
    set_counts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "or_choices", tuple((str(a), str(b)) for a, b in self.or_choices))
        object.__setattr__(
            self, "set_counts", tuple((str(a), str(b), int(n)) for a, b, n in self.set_counts))


@dataclass(frozen=True)
class SceneLayout:
    room: Room
    furniture: tuple = ()
    supported_objects: tuple = ()
    tree_choices: TreeChoices = field(default_factory=TreeChoices)

    def __post_init__(self):
        object.__setattr__(self, "furniture", tuple(self.furniture))
        object.__setattr__(self, "supported_objects", tuple(self.supported_objects))

    @property
    def instances(self):
        return self.furniture + self.supported_objects

    def replace(self, **kw):
        return replace(self, **kw)


def validate(scene):
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    room = scene.room
    nf = len(scene.furniture)
    for kind, objs in (("furniture", scene.furniture), ("object", scene.supported_objects)):
        for i, obj in enumerate(objs):
            tag = f"{kind}[{i}] {obj.category}"
            if min(obj.size) <= 0:
                problems.append(f"{tag}: non-positive size")
            if not (0.0 <= obj.yaw < TWO_PI):
                problems.append(f"{tag}: yaw not normalized")
            if not all(math.isfinite(v) for v in obj.position + obj.size):
                problems.append(f"{tag}: non-finite geometry")
                continue
            if not room.contains(obj.position[0], obj.position[1]):
                problems.append(f"{tag}: out of room bounds")
            if obj.address is not None:
                if not (0 <= obj.address < nf) or (kind == "furniture" and obj.address == i):
                    problems.append(f"{tag}: dangling address {obj.address}")
                elif kind == "object":
                    support = scene.furniture[obj.address]
                    if abs(obj.position[2] - support.top) > 1e-9:
                        problems.append(f"{tag}: z {obj.position[2]} not on supporter top {support.top}")
    return problems
