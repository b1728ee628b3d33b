"""Affordance maps: where humans stand relative to an object.

A map is a normalized grid over ``[-R, R]^2`` in the object frame (object at
the origin, facing +y).  Maps are estimated by accumulating every human
position of a scene into the frame of every object of that scene.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

EXTENT = 3.0
RESOLUTION = 0.1
SMOOTHING = 0.15
EPS_AFF = 1e-6

# categories whose centers count as visited human positions
HUMAN_SEAT_CATEGORIES = ("chair", "sofa", "bed")


class AffordanceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class AffordanceMap:
    category: str
    extent: float
    resolution: float
    grid: np.ndarray
    smoothing: float

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("affordance grid must be square")
        if np.any(g < 0) or abs(g.sum() - 1.0) > 1e-9:
            raise ValueError(f"affordance grid for {self.category!r} must be non-negative and sum to 1")

    @property
    def n_cells(self):
        return self.grid.shape[0]

    def same_geometry(self, other):
        return (self.grid.shape == other.grid.shape and self.extent == other.extent
                and self.resolution == other.resolution)

    def cell_of(self, u, v):
        """Grid (row, col) of the cell containing local point (u, v), or None."""
        r = self.extent
        if not (-r <= u < r and -r <= v < r):
            return None
        n = self.n_cells
        col = min(int((u + r) / self.resolution), n - 1)
        row = min(int((v + r) / self.resolution), n - 1)
        return row, col

    def __eq__(self, other):
        return (isinstance(other, AffordanceMap) and self.category == other.category
                and self.extent == other.extent and self.resolution == other.resolution
                and self.smoothing == other.smoothing and np.array_equal(self.grid, other.grid))

    __hash__ = None


def _n_cells(extent, resolution):
    return int(round(2 * extent / resolution))


def instance_humans(obj, seat_categories=HUMAN_SEAT_CATEGORIES):
    """Human positions attached to one instance; a seat's center is one of them."""
    if obj.category in seat_categories:
        return obj.humans + (obj.xy,)
    return obj.humans


def scene_humans(scene, seat_categories=HUMAN_SEAT_CATEGORIES):
    """All human positions of a scene: stored ones plus seat centers."""
    out = []
    for obj in scene.instances:
        out.extend(obj.humans)
        if obj.category in seat_categories:
            out.append(obj.xy)
    return out


def _deposits(obj, humans, extent, resolution, n):
    """Bilinear (cloud-in-cell) weights of the humans in obj's frame."""
    out = []
    for hx, hy in humans:
        u, v = obj.to_local(hx, hy)
        # continuous cell coordinates, cell centers at integers
        fu = (u + extent) / resolution - 0.5
        fv = (v + extent) / resolution - 0.5
        c0, r0 = math.floor(fu), math.floor(fv)
        tu, tv = fu - c0, fv - r0
        for dr, wr in ((0, 1.0 - tv), (1, tv)):
            for dc, wc in ((0, 1.0 - tu), (1, tu)):
                r, c = r0 + dr, c0 + dc
                w = wr * wc
                if w > 0.0 and 0 <= r < n and 0 <= c < n:
                    out.append((r, c, w))
    return out


def estimate_maps(corpus, extent=EXTENT, resolution=RESOLUTION, smoothing=SMOOTHING,
                  categories=None, seat_categories=HUMAN_SEAT_CATEGORIES):
    """Estimate one affordance map per object category.

    Parameters
    ----------
    corpus : sequence of SceneLayout
        Scenes whose instances may carry human positions.
    categories : iterable of str, optional
        Categories that must get a map; those without any human evidence
        get a uniform map and an :class:`AffordanceWarning`.

    Returns
    -------
    dict
        category -> AffordanceMap
    """
    if len(corpus) == 0:
        raise ValueError("affordance estimation needs a non-empty corpus")
    n = _n_cells(extent, resolution)
    records = {}
    for scene in corpus:
        humans = scene_humans(scene, seat_categories)
        for obj in scene.instances:
            recs = records.setdefault(obj.category, [])
            recs.extend(_deposits(obj, humans, extent, resolution, n))
    wanted = set(records)
    if categories is not None:
        wanted |= set(categories)
    maps = {}
    for cat in sorted(wanted):
        # sorted accumulation makes the result independent of corpus order
        recs = sorted(records.get(cat, ()))
        grid = np.zeros((n, n))
        if recs:
            rows, cols, w = (np.array(a) for a in zip(*recs))
            np.add.at(grid, (rows.astype(int), cols.astype(int)), w)
        if grid.sum() <= 0:
            warnings.warn(f"no human positions for category {cat!r}; using a uniform map",
                          AffordanceWarning, stacklevel=2)
            grid = np.full((n, n), 1.0 / (n * n))
        else:
            if smoothing > 0:
                grid = ndimage.gaussian_filter(grid, smoothing / resolution, mode="constant")
            grid = grid / grid.sum()
        maps[cat] = AffordanceMap(cat, extent, resolution, grid, smoothing)
    return maps


def human_prob(amap, human_world, obj, eps=EPS_AFF):
    """Affordance density (per m^2) of a world position relative to ``obj``."""
    u, v = obj.to_local(human_world[0], human_world[1])
    cell = amap.cell_of(u, v)
    if cell is None:
        return eps
    return amap.grid[cell] / (amap.resolution * amap.resolution)


def sample_humans(amap, obj, n, rng):
    """Draw ``n`` world positions from the map placed at the object's pose."""
    if n < 1:
        raise ValueError("n must be >= 1")
    flat = amap.grid.ravel()
    idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
    rows, cols = np.divmod(idx, amap.n_cells)
    jitter = rng.random((n, 2))
    u = -amap.extent + (cols + jitter[:, 0]) * amap.resolution
    v = -amap.extent + (rows + jitter[:, 1]) * amap.resolution
    return [obj.to_world(float(a), float(b)) for a, b in zip(u, v)]
