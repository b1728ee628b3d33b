"""Footprints, exact box overlap and wall distances."""
from __future__ import annotations

import math

from .scene import wrap_pi

# wall order doubles as the tie-break: -x, +x, -y, +y
# inward normal yaws use the facing convention (yaw 0 faces +y)
WALLS = ("-x", "+x", "-y", "+y")
_WALL_NORMAL_YAW = {"-x": math.pi / 2, "+x": -math.pi / 2, "-y": 0.0, "+y": math.pi}


class InvalidLayoutError(ValueError):
    pass


def rect_corners(cx, cy, w, l, yaw):
    """Corners of a w x l rectangle (w across, l along facing), counter-clockwise."""
    c, s = math.cos(yaw), math.sin(yaw)
    hw, hl = 0.5 * w, 0.5 * l
    out = []
    for u, v in ((-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)):
        out.append((cx + c * u + s * v, cy - s * u + c * v))
    return out


def footprint(obj):
    return rect_corners(obj.position[0], obj.position[1], obj.size[0], obj.size[1], obj.yaw)


def polygon_area(poly):
    """Signed shoelace area; positive for counter-clockwise vertex order."""
    n = len(poly)
    if n < 3:
        return 0.0
    a = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def clip_convex(subject, clip):
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp, out = out, []
        m = len(inp)
        for j in range(m):
            px, py = inp[j - 1]
            qx, qy = inp[j]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sq >= 0.0:
                if sp < 0.0:
                    t = sp / (sp - sq)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif sp >= 0.0:
                t = sp / (sp - sq)
                out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def intersection_area(p, q):
    return max(polygon_area(clip_convex(p, q)), 0.0)


def _z_overlap(a, b):
    lo = max(a.position[2], b.position[2])
    hi = min(a.top, b.top)
    return max(hi - lo, 0.0)


def overlap_volume(a, b):
    """Intersection volume of two oriented boxes (yaw about z only)."""
    dz = _z_overlap(a, b)
    if dz <= 0.0:
        return 0.0
    # cheap bounding-circle reject
    ra = 0.5 * math.hypot(a.size[0], a.size[1])
    rb = 0.5 * math.hypot(b.size[0], b.size[1])
    if math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1]) >= ra + rb:
        return 0.0
    return intersection_area(footprint(a), footprint(b)) * dz


def outside_room_volume(obj, room):
    """Volume of the box that sticks out of the room rectangle."""
    x0, y0, x1, y1 = room.bounds
    fp = footprint(obj)
    if all(x0 <= x <= x1 and y0 <= y <= y1 for x, y in fp):
        return 0.0
    rect = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    inside = intersection_area(fp, rect)
    return max(obj.size[0] * obj.size[1] - inside, 0.0) * obj.size[2]


def nearest_wall(obj, room):
    """Distance from the object center to the closest wall and the yaw
    of the object relative to that wall's inward normal, in (-pi, pi]."""
    x, y = obj.position[0], obj.position[1]
    if not room.contains(x, y):
        raise InvalidLayoutError(f"{obj.category} center ({x:.3f}, {y:.3f}) is outside the room")
    x0, y0, x1, y1 = room.bounds
    dists = (x - x0, x1 - x, y - y0, y1 - y)
    k = min(range(4), key=lambda i: (dists[i], i))
    return dists[k], wrap_pi(obj.yaw - _WALL_NORMAL_YAW[WALLS[k]])
