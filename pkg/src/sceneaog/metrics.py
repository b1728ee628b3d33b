"""Distances between affordance maps."""
from __future__ import annotations

import math

import numpy as np


class GeometryMismatchError(ValueError):
    pass


def _grids(a, b):
    ga = np.asarray(getattr(a, "grid", a), dtype=float)
    gb = np.asarray(getattr(b, "grid", b), dtype=float)
    if ga.shape != gb.shape:
        raise GeometryMismatchError(f"grid shapes differ: {ga.shape} vs {gb.shape}")
    if hasattr(a, "same_geometry") and hasattr(b, "same_geometry") and not a.same_geometry(b):
        raise GeometryMismatchError("maps differ in extent or resolution")
    return ga, gb


def tv_distance(a, b):
    """Total variation ``0.5 * sum |p - q|`` of two normalized grids."""
    p, q = _grids(a, b)
    return float(min(0.5 * np.abs(p - q).sum(), 1.0))


def hellinger(a, b):
    """Hellinger distance ``sqrt(sum (sqrt p - sqrt q)^2 / 2)``."""
    p, q = _grids(a, b)
    d = np.sqrt(p) - np.sqrt(q)
    return float(min(math.sqrt(0.5 * float(np.sum(d * d))), 1.0))


def compare_maps(reference, other, categories=None):
    """Per-category TV and Hellinger distances for categories in both tables."""
    cats = sorted(set(reference) & set(other)) if categories is None else list(categories)
    return {c: {"tv": tv_distance(reference[c], other[c]), "hellinger": hellinger(reference[c], other[c])}
            for c in cats}
