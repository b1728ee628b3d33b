"""Top-view rasters (segmentation and affordance heatmaps) and PGM files.

Row 0 of every raster is the room's ``y`` minimum; the PGM writer flips
rows so that +y points up in image viewers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class RasterImage:
    data: np.ndarray          # (height, width) integers
    resolution: float         # meters per cell

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def __eq__(self, other):
        return (isinstance(other, RasterImage) and self.resolution == other.resolution
                and np.array_equal(self.data, other.data))

    __hash__ = None


def raster_shape(room, resolution):
    """(height, width) in cells: room extent over resolution, rounded up."""
    return (int(math.ceil(room.size[1] / resolution - 1e-9)),
            int(math.ceil(room.size[0] / resolution - 1e-9)))


def _cell_centers(room, resolution):
    h, w = raster_shape(room, resolution)
    xs = room.origin[0] + (np.arange(w) + 0.5) * resolution
    ys = room.origin[1] + (np.arange(h) + 0.5) * resolution
    return np.meshgrid(xs, ys)


def _local(obj, gx, gy):
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    dx, dy = gx - obj.position[0], gy - obj.position[1]
    return c * dx - s * dy, s * dx + c * dy


def default_category_index(scene):
    cats = sorted({o.category for o in scene.instances})
    return {c: i + 1 for i, c in enumerate(cats)}


def rasterize_segmentation(scene, resolution=0.1, category_index=None):
    """Category index of the footprint covering each cell center; floor is 0.

    Where footprints overlap the instance with the larger base height ``z``
    wins; ties go to the smaller category index.
    """
    index = category_index or default_category_index(scene)
    gx, gy = _cell_centers(scene.room, resolution)
    out = np.zeros(gx.shape, dtype=np.int64)
    order = sorted(scene.instances, key=lambda o: (o.position[2], -index[o.category]))
    for obj in order:
        u, v = _local(obj, gx, gy)
        inside = (np.abs(u) <= 0.5 * obj.size[0]) & (np.abs(v) <= 0.5 * obj.size[1])
        out[inside] = index[obj.category]
    return RasterImage(out, resolution)


def affordance_density(scene, model, resolution=0.1):
    """Sum of each instance's affordance map placed at its pose, per cell (float)."""
    gx, gy = _cell_centers(scene.room, resolution)
    acc = np.zeros(gx.shape)
    for obj in scene.instances:
        amap = model.affordances.get(obj.category)
        if amap is None:
            continue
        u, v = _local(obj, gx, gy)
        r, n = amap.extent, amap.n_cells
        inside = (u >= -r) & (u < r) & (v >= -r) & (v < r)
        col = np.clip(((u + r) / amap.resolution).astype(int), 0, n - 1)
        row = np.clip(((v + r) / amap.resolution).astype(int), 0, n - 1)
        acc += np.where(inside, amap.grid[row, col], 0.0)
    return acc


def rasterize_affordance(scene, model, resolution=0.1):
    """Affordance heatmap of a scene normalized to 0-255 gray levels."""
    acc = affordance_density(scene, model, resolution)
    peak = acc.max() if acc.size else 0.0
    if peak <= 0:
        return RasterImage(np.zeros(acc.shape, dtype=np.int64), resolution)
    return RasterImage(np.rint(255.0 * acc / peak).astype(np.int64), resolution)


def heatmap_raster(hm):
    """Gray-level raster of a trajectory heatmap."""
    g = hm.grid
    peak = g.max() if g.size else 0.0
    data = np.zeros(g.shape, dtype=np.int64) if peak <= 0 else np.rint(255.0 * g / peak).astype(np.int64)
    return RasterImage(data, hm.cell)


def pgm_bytes(img):
    data = np.asarray(img.data)
    maxval = max(255, int(data.max()) if data.size else 0)
    if maxval > 255:
        raise ValueError(f"values above 255 do not fit a one-byte PGM (max {maxval})")
    if data.size and data.min() < 0:
        raise ValueError("PGM values must be non-negative")
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    return header + np.ascontiguousarray(data[::-1]).astype(np.uint8).tobytes()


def write_pgm(path, img):
    Path(path).write_bytes(pgm_bytes(img))


def read_pgm(path, resolution=1.0):
    """Read a binary PGM written by :func:`write_pgm` (rows flipped back)."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM is not supported")
    body = parts[4]
    data = np.frombuffer(body[:w * h], dtype=np.uint8).reshape(h, w)[::-1].astype(np.int64)
    return RasterImage(data, resolution)
