"""Balls, cubes and finite unions of them.

Membership is exact coordinate arithmetic. Balls and cubes are open
(``|x - c| < r`` and ``max_i |x_i - c_i| < side/2``), matching exit times
defined as the first time the path is outside the open set.
"""

from dataclasses import dataclass, field

import math

import numpy as np

from .constants import sphere_area

BALL = 0
CUBE = 1


def _as_point(p):
    a = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if a.ndim != 1:
        raise ValueError("point must be a 1-D coordinate vector")
    return a


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def d(self):
        return self.center.size

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        diff = x - self.center
        return np.sum(diff * diff, axis=-1) < self.radius * self.radius

    def volume(self):
        d = self.d
        return sphere_area(d) / d * self.radius ** d

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube given by its center and side length."""

    center: np.ndarray
    side: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        if not self.side > 0:
            raise ValueError("cube side must be positive")

    @property
    def d(self):
        return self.center.size

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.max(np.abs(x - self.center), axis=-1) < 0.5 * self.side

    def volume(self):
        return self.side ** self.d

    def bounding_box(self):
        h = 0.5 * self.side
        return self.center - h, self.center + h

    def to_dict(self):
        return {"kind": "cube", "center": self.center.tolist(), "side": float(self.side)}


@dataclass(frozen=True)
class Union:
    """Finite union of balls and cubes; the empty union is the empty set."""

    parts: tuple = ()
    d: int = 1

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        for p in parts:
            if p.d != self.d:
                raise ValueError("all parts of a union must share the dimension")

    @property
    def empty(self):
        return len(self.parts) == 0

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for p in self.parts:
            out |= p.contains(x)
        return out

    def volume(self):
        """Exact for disjoint parts; overlapping parts need ``disjoint_volume``."""
        if self.empty:
            return 0.0
        if len(self.parts) == 1:
            return self.parts[0].volume()
        return disjoint_volume(self)

    def to_dict(self):
        return {"kind": "union", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class DyadicUnion:
    """Union of cells of a regular grid of ``2**level`` cells per axis over a cube.

    ``cells`` holds flat cell indices (C order). Membership is a table lookup,
    which keeps occupation integrals over many random sets cheap.
    """

    cube: Cube
    level: int
    cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        cells = np.unique(np.asarray(self.cells, dtype=np.int64))
        n = 2 ** self.level
        if cells.size and (cells.min() < 0 or cells.max() >= n ** self.cube.d):
            raise ValueError("cell index out of range")
        object.__setattr__(self, "cells", cells)
        mask = np.zeros(n ** self.cube.d, dtype=bool)
        mask[cells] = True
        object.__setattr__(self, "_mask", mask)

    @property
    def d(self):
        return self.cube.d

    @property
    def empty(self):
        return self.cells.size == 0

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        n = 2 ** self.level
        lo, _ = self.cube.bounding_box()
        inside = self.cube.contains(x)
        idx = np.floor((x - lo) / self.cube.side * n).astype(np.int64)
        idx = np.clip(idx, 0, n - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), (n,) * self.d)
        return inside & self._mask[flat]

    def volume(self):
        return self.cells.size * (self.cube.side / 2 ** self.level) ** self.d

    def to_dict(self):
        return {"kind": "dyadic", "cube": self.cube.to_dict(), "level": self.level,
                "cells": self.cells.tolist()}


def as_region(obj, d=None):
    """Normalize a Ball, Cube, Union, DyadicUnion or list of parts."""
    if isinstance(obj, (Ball, Cube, Union, DyadicUnion)):
        return obj
    if obj is None:
        return Union((), d or 1)
    parts = tuple(obj)
    if not parts:
        return Union((), d or 1)
    return Union(parts, parts[0].d)


def region_parts(region):
    """Flat tuple of Ball/Cube parts; DyadicUnion is expanded into its cells."""
    if isinstance(region, (Ball, Cube)):
        return (region,)
    if isinstance(region, Union):
        return region.parts
    if isinstance(region, DyadicUnion):
        n = 2 ** region.level
        lo, _ = region.cube.bounding_box()
        w = region.cube.side / n
        idx = np.array(np.unravel_index(region.cells, (n,) * region.d)).T
        return tuple(Cube(lo + (i + 0.5) * w, w) for i in idx)
    raise TypeError(f"not a region: {region!r}")


def encode_region(region, d):
    """Arrays (kinds, centers, sizes) for the compiled membership test.

    size is the radius for balls and the half-side for cubes.
    """
    parts = region_parts(region) if region is not None else ()
    kinds = np.array([BALL if isinstance(p, Ball) else CUBE for p in parts], dtype=np.int64)
    centers = np.zeros((len(parts), d))
    sizes = np.zeros(len(parts))
    for i, p in enumerate(parts):
        centers[i] = p.center
        sizes[i] = p.radius if isinstance(p, Ball) else 0.5 * p.side
    return kinds, centers, sizes


def contains_region(outer, inner):
    """True when every part of ``inner`` lies inside ``outer`` (a Ball or Cube)."""
    if isinstance(inner, (Union, DyadicUnion)) and inner.empty:
        return True
    for p in region_parts(inner):
        if not _part_inside(outer, p):
            return False
    return True


def _part_inside(outer, p):
    tol = 1e-12
    if isinstance(outer, Ball):
        if isinstance(p, Ball):
            return np.linalg.norm(p.center - outer.center) + p.radius <= outer.radius + tol
        # farthest corner of the cube
        far = np.abs(p.center - outer.center) + 0.5 * p.side
        return math.sqrt(float(np.sum(far * far))) <= outer.radius + tol
    if isinstance(outer, Cube):
        half = 0.5 * outer.side
        ext = p.radius if isinstance(p, Ball) else 0.5 * p.side
        return float(np.max(np.abs(p.center - outer.center))) + ext <= half + tol
    raise TypeError("outer domain must be a Ball or a Cube")


def disjoint_volume(union, n_per_axis=None):
    """Volume of a union of possibly overlapping parts.

    Disjoint parts are summed exactly; overlaps fall back to a midpoint grid
    over the bounding box, which is exact for grid-aligned cubes.
    """
    parts = union.parts
    boxes = [p.bounding_box() for p in parts]
    overlap = False
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            lo = np.maximum(boxes[i][0], boxes[j][0])
            hi = np.minimum(boxes[i][1], boxes[j][1])
            if np.all(hi > lo):
                overlap = True
                break
        if overlap:
            break
    if not overlap:
        return float(sum(p.volume() for p in parts))
    d = union.d
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    n = n_per_axis or {1: 200000, 2: 1000, 3: 120}[d]
    axes = [lo[k] + (np.arange(n) + 0.5) * (hi[k] - lo[k]) / n for k in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    frac = union.contains(grid).mean()
    return float(frac * np.prod(hi - lo))
