"""Bi-directional RRT between furniture pieces and the activity heatmap.

The heatmap is the normalized, smoothed count of planned trajectories
crossing each floor cell; its negative entropy is the ``f-ent`` loss slot.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import rect_corners


class PlanningError(ValueError):
    """Start or goal lies inside an obstacle."""


@dataclass(frozen=True)
class PlannerParams:
    step: float = 0.2
    goal_bias: float = 0.1
    max_iters: int = 5000
    agent_radius: float = 0.25
    cell: float = 0.2
    smoothing: float = 0.2
    # after this many iterations, check that start and goal can be connected at all
    connectivity_check: int = 200
    connectivity_cell: float = 0.05


@dataclass(frozen=True)
class Obstacle:
    """Oriented rectangle; ``w`` across and ``l`` along the yaw direction."""

    cx: float
    cy: float
    w: float
    l: float
    yaw: float = 0.0

    def corners(self):
        return rect_corners(self.cx, self.cy, self.w, self.l, self.yaw)

    def inflated(self, r):
        return Obstacle(self.cx, self.cy, self.w + 2 * r, self.l + 2 * r, self.yaw)

    def _frame(self):
        return self.cx, self.cy, 0.5 * self.w, 0.5 * self.l, math.cos(self.yaw), math.sin(self.yaw)


def furniture_obstacle(obj, radius=0.0):
    return Obstacle(obj.position[0], obj.position[1], obj.size[0], obj.size[1], obj.yaw).inflated(radius)


def _inside(frame, x, y):
    cx, cy, hw, hl, c, s = frame
    dx, dy = x - cx, y - cy
    return abs(c * dx - s * dy) < hw and abs(s * dx + c * dy) < hl


def _segment_hits(frame, x0, y0, x1, y1):
    """Liang-Barsky test of a segment against the open box in its frame."""
    cx, cy, hw, hl, c, s = frame
    ax, ay = x0 - cx, y0 - cy
    bx, by = x1 - cx, y1 - cy
    u0, v0 = c * ax - s * ay, s * ax + c * ay
    du, dv = c * bx - s * by - u0, s * bx + c * by - v0
    t0, t1 = 0.0, 1.0
    for p, q in ((-du, u0 + hw), (du, hw - u0), (-dv, v0 + hl), (dv, hl - v0)):
        if p == 0.0:
            if q <= 0.0:
                return False
        else:
            t = q / p
            if p < 0.0:
                if t > t0:
                    t0 = t
            elif t < t1:
                t1 = t
            if t0 >= t1:
                return False
    return True


@dataclass(frozen=True)
class PlanProblem:
    room: object
    obstacles: tuple
    start: tuple
    goal: tuple

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for name in ("start", "goal"):
            p = getattr(self, name)
            if not self.room.contains(p[0], p[1]):
                raise ValueError(f"{name} {p} is outside the room")

    def point_free(self, x, y):
        return not any(_inside(o._frame(), x, y) for o in self.obstacles)


def surely_disconnected(problem, cell=0.05):
    """True if start and goal lie in different components of the free space.

    Cells strictly inside a single obstacle are blocked; every other cell
    counts as free, so the grid over-approximates the free space and a
    disconnection on the grid implies a disconnection in the plane.
    """
    x0, y0, x1, y1 = problem.room.bounds
    nx = max(int(math.ceil((x1 - x0) / cell)), 1)
    ny = max(int(math.ceil((y1 - y0) / cell)), 1)
    xs = np.minimum(x0 + np.arange(nx + 1) * cell, x1)
    ys = np.minimum(y0 + np.arange(ny + 1) * cell, y1)
    gx, gy = np.meshgrid(xs, ys)
    blocked = np.zeros((ny, nx), dtype=bool)
    for o in problem.obstacles:
        cx, cy, hw, hl, c, s = o._frame()
        dx, dy = gx - cx, gy - cy
        ins = (np.abs(c * dx - s * dy) < hw) & (np.abs(s * dx + c * dy) < hl)
        blocked |= ins[:-1, :-1] & ins[1:, :-1] & ins[:-1, 1:] & ins[1:, 1:]
    labels, _ = ndimage.label(~blocked, structure=np.ones((3, 3), dtype=int))

    def label_of(p):
        col = min(max(int((p[0] - x0) / cell), 0), nx - 1)
        row = min(max(int((p[1] - y0) / cell), 0), ny - 1)
        return labels[row, col]

    a, b = label_of(problem.start), label_of(problem.goal)
    return a == 0 or b == 0 or a != b


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple

    def __len__(self):
        return len(self.waypoints)

    def length(self):
        w = self.waypoints
        return sum(math.dist(w[i], w[i + 1]) for i in range(len(w) - 1))


class _Tree:
    def __init__(self, root):
        self.xy = np.empty((64, 2))
        self.parent = np.empty(64, dtype=np.int64)
        self.xy[0] = root
        self.parent[0] = -1
        self.n = 1

    def add(self, x, y, parent):
        if self.n == len(self.parent):
            self.xy = np.concatenate([self.xy, np.empty_like(self.xy)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.xy[self.n] = (x, y)
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def nearest(self, x, y):
        d = self.xy[:self.n] - (x, y)
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def branch(self, i):
        out = []
        while i >= 0:
            out.append((float(self.xy[i, 0]), float(self.xy[i, 1])))
            i = int(self.parent[i])
        return out[::-1]


_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


class _BiRRT:
    def __init__(self, problem, params):
        self.frames = [o._frame() for o in problem.obstacles]
        self.step = params.step

    def free_segment(self, x0, y0, x1, y1):
        for f in self.frames:
            if _segment_hits(f, x0, y0, x1, y1):
                return False
        return True

    def step_from(self, tree, i, qx, qy):
        x0, y0 = tree.xy[i]
        dx, dy = qx - x0, qy - y0
        d = math.hypot(dx, dy)
        if d <= self.step:
            nx, ny, status = qx, qy, _REACHED
        else:
            nx, ny, status = x0 + self.step * dx / d, y0 + self.step * dy / d, _ADVANCED
        if not self.free_segment(x0, y0, nx, ny):
            return _TRAPPED, i
        return status, tree.add(nx, ny, i)

    def extend(self, tree, qx, qy):
        return self.step_from(tree, tree.nearest(qx, qy), qx, qy)

    def connect(self, tree, qx, qy):
        status, i = self.extend(tree, qx, qy)
        while status == _ADVANCED:
            status, j = self.step_from(tree, i, qx, qy)
            if status != _TRAPPED:
                i = j
        return (_REACHED if status == _REACHED else _TRAPPED), i


def birrt(problem, params=PlannerParams(), rng=None):
    """Plan a collision-free polyline from start to goal.

    Returns a :class:`Trajectory`, or ``None`` when no connection was found
    within ``params.max_iters`` iterations.  Raises :class:`PlanningError`
    if the start or goal is inside an obstacle.
    """
    if rng is None:
        rng = np.random.default_rng()
    for name in ("start", "goal"):
        p = getattr(problem, name)
        if not problem.point_free(p[0], p[1]):
            raise PlanningError(f"{name} {tuple(p)} is inside an obstacle")
    start = (float(problem.start[0]), float(problem.start[1]))
    goal = (float(problem.goal[0]), float(problem.goal[1]))
    if start == goal:
        return Trajectory((start,))
    planner = _BiRRT(problem, params)
    if math.dist(start, goal) <= params.step and planner.free_segment(*start, *goal):
        return Trajectory((start, goal))
    x0, y0, x1, y1 = problem.room.bounds
    a, b = _Tree(start), _Tree(goal)
    a_is_start = True
    for it in range(params.max_iters):
        if it == params.connectivity_check and surely_disconnected(problem, params.connectivity_cell):
            # no connection exists, so the full iteration budget would fail too
            return None
        u = rng.random(3)
        if u[0] < params.goal_bias:
            qx, qy = b.xy[0]
        else:
            qx, qy = x0 + u[1] * (x1 - x0), y0 + u[2] * (y1 - y0)
        status, ia = planner.extend(a, qx, qy)
        if status != _TRAPPED:
            # the other tree greedily chases the new node
            status, ib = planner.connect(b, *a.xy[ia])
            if status == _REACHED:
                pa, pb = a.branch(ia), b.branch(ib)
                path = pa + pb[::-1][1:]
                if not a_is_start:
                    path = path[::-1]
                return Trajectory(tuple(path))
        a, b = b, a
        a_is_start = not a_is_start
    return None


# --- heatmap ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryHeatmap:
    grid: np.ndarray
    cell: float
    origin: tuple = (0.0, 0.0)
    empty: bool = False
    n_trajectories: int = 0
    trajectories: tuple = field(default=(), repr=False)

    def __eq__(self, other):
        return (isinstance(other, TrajectoryHeatmap) and self.cell == other.cell
                and self.empty == other.empty and np.array_equal(self.grid, other.grid))

    __hash__ = None


def _grid_shape(room, cell):
    return int(math.ceil(room.size[1] / cell - 1e-9)), int(math.ceil(room.size[0] / cell - 1e-9))


def pair_seed(seed, key):
    """Seed sequence for one planning pair, independent of list order."""
    digest = hashlib.sha256(repr(key).encode()).digest()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")])


def _ranks(furniture):
    order = sorted(range(len(furniture)),
                   key=lambda i: (furniture[i].category, furniture[i].position,
                                  furniture[i].yaw, furniture[i].size))
    ranks, seen = {}, {}
    for i in order:
        cat = furniture[i].category
        ranks[i] = seen.get(cat, 0)
        seen[cat] = ranks[i] + 1
    return ranks


def rasterize_trajectory(traj, room, cell, shape):
    """Cells (row, col) touched by the polyline, each counted once."""
    pts = np.asarray(traj.waypoints, dtype=float)
    if len(pts) > 1:
        dense = [pts[:1]]
        for p, q in zip(pts[:-1], pts[1:]):
            k = max(int(math.ceil(math.dist(p, q) / (0.25 * cell))), 1)
            t = np.arange(1, k + 1)[:, None] / k
            dense.append(p + t * (q - p))
        pts = np.concatenate(dense)
    col = np.clip(((pts[:, 0] - room.origin[0]) / cell).astype(int), 0, shape[1] - 1)
    row = np.clip(((pts[:, 1] - room.origin[1]) / cell).astype(int), 0, shape[0] - 1)
    return np.unique(row * shape[1] + col)


def activity_heatmap(scene, params=PlannerParams(), seed=0, keep_trajectories=False):
    """Plan between every ordered pair of furniture and accumulate a heatmap."""
    room = scene.room
    shape = _grid_shape(room, params.cell)
    furn = scene.furniture
    if len(furn) < 2:
        return TrajectoryHeatmap(np.zeros(shape), params.cell, room.origin, empty=True)
    ranks = _ranks(furn)
    obstacles = [furniture_obstacle(f, params.agent_radius) for f in furn]
    counts = np.zeros(shape[0] * shape[1])
    n_found = 0
    kept = []
    for i in range(len(furn)):
        for j in range(len(furn)):
            if i == j:
                continue
            others = [o for k, o in enumerate(obstacles) if k != i and k != j]
            key = (furn[i].category, ranks[i], furn[j].category, ranks[j])
            rng = np.random.default_rng(pair_seed(seed, key))
            problem = PlanProblem(room, others, furn[i].xy, furn[j].xy)
            try:
                traj = birrt(problem, params, rng)
            except PlanningError:
                continue
            if traj is None:
                continue
            n_found += 1
            counts[rasterize_trajectory(traj, room, params.cell, shape)] += 1.0
            if keep_trajectories:
                kept.append(traj)
    grid = counts.reshape(shape)
    if n_found == 0:
        return TrajectoryHeatmap(grid, params.cell, room.origin, empty=True)
    if params.smoothing > 0:
        grid = ndimage.gaussian_filter(grid, params.smoothing / params.cell, mode="constant")
    grid = grid / grid.sum()
    return TrajectoryHeatmap(grid, params.cell, room.origin, False, n_found, tuple(kept))


def heatmap_entropy(hm):
    if hm.empty:
        return 0.0
    p = hm.grid[hm.grid > 0]
    return float(-np.sum(p * np.log(p)))


def l_ent(hm):
    return -heatmap_entropy(hm)
