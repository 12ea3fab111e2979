"""Tiled phase-portrait renderer.

Every pixel center is iterated with the same stopping rules as
:func:`cstardyn.dynamics.iterate`. Tiles are independent, so they may run in
any order or in separate processes; the image depends only on the job.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import BOUNDED_CODE, ESCAPING_CODE, UNDECIDED_CODE, OrbitBudget, classify_points
from .mapmodel import MapSpec

MAX_PIXELS = 10**8

CLASS_NAMES = ("escaping_inf", "escaping_zero", "escaping_mixed", "bounded", "undecided")
_INF_CLASS, _ZERO_CLASS, _MIXED_CLASS, _BOUNDED_CLASS, _UNDECIDED_CLASS = range(5)


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class Viewport:
    """``cartesian``: x0..x1 is Re z, y0..y1 is Im z.
    ``logpolar``: x0..x1 is log|z|, y0..y1 is arg z."""

    x0: float
    x1: float
    y0: float
    y1: float
    kind: str = "cartesian"

    def __post_init__(self):
        if self.kind not in ("cartesian", "logpolar"):
            raise RenderError(f"unknown viewport kind {self.kind!r}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise RenderError("viewport needs x1 > x0 and y1 > y0")

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1, "kind": self.kind}


@dataclass(frozen=True)
class Palette:
    """Hue by class, brightness by log first-passage time.

    Orbits whose last ``confirm_steps`` symbols mix 0 and ∞ get a hue hashed
    from those symbols. Non-escaping pixels are dark.
    """

    prefix_len: int = 8
    hue_inf: float = 0.07
    hue_zero: float = 0.58
    saturation: float = 0.8
    bounded_rgb: tuple = (40, 40, 48)
    undecided_rgb: tuple = (0, 0, 0)

    def to_dict(self) -> dict:
        return {
            "prefix_len": self.prefix_len,
            "hue_inf": self.hue_inf,
            "hue_zero": self.hue_zero,
            "saturation": self.saturation,
            "bounded_rgb": list(self.bounded_rgb),
            "undecided_rgb": list(self.undecided_rgb),
        }


@dataclass(frozen=True)
class RenderJob:
    map: MapSpec
    viewport: Viewport
    width: int
    height: int
    budget: OrbitBudget = field(default_factory=OrbitBudget)
    palette: Palette = field(default_factory=Palette)
    tile_size: int = 64

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise RenderError("width and height must be positive")
        if self.width * self.height > MAX_PIXELS:
            raise RenderError(f"at most {MAX_PIXELS} pixels")
        if self.tile_size < 1:
            raise RenderError("tile_size must be positive")

    def tiles(self) -> list:
        """(row0, row1, col0, col1) in row-major order."""
        t = self.tile_size
        return [
            (r, min(r + t, self.height), c, min(c + t, self.width))
            for r in range(0, self.height, t)
            for c in range(0, self.width, t)
        ]

    def pixel_points(self, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
        """Pixel centers of a block; row 0 is the top (largest y)."""
        vp = self.viewport
        dx = (vp.x1 - vp.x0) / self.width
        dy = (vp.y1 - vp.y0) / self.height
        x = vp.x0 + (np.arange(c0, c1) + 0.5) * dx
        y = vp.y1 - (np.arange(r0, r1) + 0.5) * dy
        if vp.kind == "logpolar":
            return np.exp(x[None, :] + 1j * y[:, None])
        z = x[None, :] + 1j * y[:, None]
        # 0 is not in the domain: move such a center half a pixel to the right
        return np.where(z == 0, complex(0.5 * dx, 0.0), z)

    def to_dict(self) -> dict:
        return {
            "map": self.map.to_dict(),
            "viewport": self.viewport.to_dict(),
            "width": self.width,
            "height": self.height,
            "budget": self.budget.to_dict(),
            "palette": self.palette.to_dict(),
            "tile_size": self.tile_size,
        }


@dataclass
class RenderResult:
    rgb: np.ndarray
    verdict: np.ndarray
    first_passage: np.ndarray
    prefix: np.ndarray
    tail: np.ndarray
    summary: dict
    elapsed: float = 0.0

    def prefix_word(self, length: int) -> np.ndarray:
        """Mask of pixels whose first ``length`` symbols are all ∞."""
        bits = np.uint64((1 << length) - 1)
        return (self.prefix & bits) == bits

    def write_png(self, path) -> None:
        from PIL import Image

        Image.fromarray(self.rgb, mode="RGB").save(path, format="PNG", optimize=False)

    def write_summary(self, path, job: RenderJob) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"job": job.to_dict(), "summary": self.summary}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _render_tile(args):
    job, (r0, r1, c0, c1) = args
    z = job.pixel_points(r0, r1, c0, c1)
    classes = classify_points(job.map, z, job.budget, job.palette.prefix_len)
    return (r0, r1, c0, c1), classes.verdict, classes.first_passage, classes.prefix, classes.tail


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    table = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    rgb = np.zeros(h.shape + (3,))
    for k, channels in enumerate(table):
        sel = i == k
        for c in range(3):
            rgb[..., c][sel] = np.broadcast_to(channels[c], h.shape)[sel]
    return rgb


def pixel_classes(verdict: np.ndarray, tail: np.ndarray, confirm_steps: int) -> np.ndarray:
    """Class index per pixel (see ``CLASS_NAMES``)."""
    window = np.uint64((1 << confirm_steps) - 1)
    last = tail & window
    out = np.full(verdict.shape, _UNDECIDED_CLASS, dtype=np.int8)
    esc = verdict == ESCAPING_CODE
    out[esc & (last == window)] = _INF_CLASS
    out[esc & (last == 0)] = _ZERO_CLASS
    out[esc & (last != window) & (last != 0)] = _MIXED_CLASS
    out[verdict == BOUNDED_CODE] = _BOUNDED_CLASS
    out[verdict == UNDECIDED_CODE] = _UNDECIDED_CLASS
    return out


def colorize(job: RenderJob, verdict, first_passage, tail) -> np.ndarray:
    pal = job.palette
    classes = pixel_classes(verdict, tail, job.budget.confirm_steps)
    hue = np.where(classes == _INF_CLASS, pal.hue_inf, pal.hue_zero).astype(float)
    # deterministic hue for mixed tails: golden-ratio hash of the last 8 symbols
    mixed_hue = ((tail & np.uint64(0xFF)).astype(float) * 0.6180339887498949) % 1.0
    hue = np.where(classes == _MIXED_CLASS, mixed_hue, hue)
    scale = math.log1p(job.budget.max_iter)
    value = 1.0 - 0.75 * np.log1p(first_passage.astype(float)) / scale
    rgb = _hsv_to_rgb(hue, np.full(hue.shape, pal.saturation), value)
    out = np.round(rgb * 255.0).astype(np.uint8)
    out[classes == _BOUNDED_CLASS] = pal.bounded_rgb
    out[classes == _UNDECIDED_CLASS] = pal.undecided_rgb
    return out


def render(job: RenderJob, workers: int = 1, tile_order: Optional[Sequence[int]] = None) -> RenderResult:
    """Render ``job``; ``tile_order`` permutes the execution order of the tiles (for testing)."""
    start = time.perf_counter()
    tiles = job.tiles()
    order = list(range(len(tiles))) if tile_order is None else list(tile_order)
    if sorted(order) != list(range(len(tiles))):
        raise RenderError("tile_order must be a permutation of the tile indices")
    shape = (job.height, job.width)
    verdict = np.zeros(shape, dtype=np.int8)
    first = np.zeros(shape, dtype=np.int64)
    prefix = np.zeros(shape, dtype=np.uint64)
    tail = np.zeros(shape, dtype=np.uint64)
    work = [(job, tiles[i]) for i in order]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_render_tile, work))
    else:
        results = [_render_tile(w) for w in work]
    for (r0, r1, c0, c1), v, f, p, t in results:
        verdict[r0:r1, c0:c1] = v
        first[r0:r1, c0:c1] = f
        prefix[r0:r1, c0:c1] = p
        tail[r0:r1, c0:c1] = t
    rgb = colorize(job, verdict, first, tail)
    classes = pixel_classes(verdict, tail, job.budget.confirm_steps)
    histogram = {name: int(np.count_nonzero(classes == k)) for k, name in enumerate(CLASS_NAMES)}
    summary = {"histogram": histogram, "pixels": job.width * job.height, "tiles": len(tiles)}
    return RenderResult(rgb, verdict, first, prefix, tail, summary, time.perf_counter() - start)
