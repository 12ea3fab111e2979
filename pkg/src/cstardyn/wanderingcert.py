"""Sampled verification of the hypotheses that produce a chain of wandering annuli.

Given an affine step M(z) = a z + b, a closed rectangle R0, a disc B0 inside
it and a smaller disc C0 inside B0, set A0 = R0 minus the interior of B0 and
X_n = M^n(X_0). The checks, per generation n, are

    inner:    f(boundary of B_n) lies in C_{n+1}
    fill:     f(closed B_n) lies in C_{n+1}
    outer:    f(boundary of R_n) avoids R_{n+1} = A_{n+1} u B_{n+1}
    disjoint: B_n is disjoint from every other B_m in the tested range

Margins are signed distances (positive means the inclusion or avoidance holds
with room to spare). Sampling is not a proof: alongside each raw margin we
report a resolution bound, half the largest distance between images of
consecutive samples, and the certified margin raw - bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .mapmodel import OK, MapSpec, SentinelError, eval_map_array

ALL_CHECKS = ("inner", "fill", "outer", "disjoint")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Affine:
    a: complex = 1.0
    b: complex = 0.0

    def __post_init__(self):
        if self.a == 0:
            raise GeometryError("affine step needs a != 0")

    def power(self, n: int) -> "Affine":
        """M^n for n >= 0."""
        a, b = complex(self.a), complex(self.b)
        if a == 1:
            return Affine(1.0, n * b)
        an = a**n
        return Affine(an, b * (an - 1) / (a - 1))

    def __call__(self, z):
        return self.a * z + self.b

    def inverse(self, z):
        return (z - self.b) / self.a


@dataclass(frozen=True)
class Disc:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("disc radius must be positive")


@dataclass(frozen=True)
class Rect:
    """Closed axis-parallel rectangle |Re(z - center)| <= half_width, |Im(z - center)| <= half_height."""

    center: complex
    half_width: float
    half_height: float

    def __post_init__(self):
        if not (self.half_width > 0 and self.half_height > 0):
            raise GeometryError("rectangle half-sides must be positive")

    def signed_distance(self, z: np.ndarray) -> np.ndarray:
        """Euclidean distance outside, minus the distance to the boundary inside."""
        w = np.asarray(z) - self.center
        dx = np.abs(w.real) - self.half_width
        dy = np.abs(w.imag) - self.half_height
        outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        inside = np.minimum(np.maximum(dx, dy), 0.0)
        return outside + inside

    def boundary(self, count: int) -> np.ndarray:
        """``count`` points walking the boundary once, spaced by arc length."""
        w, h = self.half_width, self.half_height
        t = np.arange(count) / count * (4 * w + 4 * h)
        corners = [complex(-w, -h), complex(w, -h), complex(w, h), complex(-w, h)]
        lengths = [2 * w, 2 * h, 2 * w, 2 * h]
        out = np.empty(count, dtype=complex)
        start = 0.0
        for k in range(4):
            p0, p1 = corners[k], corners[(k + 1) % 4]
            sel = (t >= start) & (t < start + lengths[k])
            out[sel] = p0 + (p1 - p0) * (t[sel] - start) / lengths[k]
            start += lengths[k]
        return self.center + out


@dataclass(frozen=True)
class AnnulusSystem:
    M: Affine
    rect: Rect
    B0: Disc
    C0: Disc
    n_range: tuple = (0, 19)

    def __post_init__(self):
        lo, hi = self.n_range
        if not (0 <= lo <= hi):
            raise GeometryError("n_range must satisfy 0 <= n_lo <= n_hi")
        if -self.rect.signed_distance(self.B0.center) - self.B0.radius <= 0:
            raise GeometryError("B0 must lie in the interior of the rectangle")
        if abs(self.C0.center - self.B0.center) + self.C0.radius >= self.B0.radius:
            raise GeometryError("C0 must lie in the interior of B0")

    def with_range(self, lo: int, hi: int) -> "AnnulusSystem":
        return AnnulusSystem(self.M, self.rect, self.B0, self.C0, (lo, hi))

    def disc(self, d: Disc, n: int) -> Disc:
        step = self.M.power(n)
        return Disc(step(d.center), abs(step.a) * d.radius)

    def contains_zero(self, n: int) -> bool:
        """Whether 0 lies in R_n = A_n u B_n."""
        step = self.M.power(n)
        return bool(self.rect.signed_distance(step.inverse(0.0)) <= 0)

    def to_dict(self) -> dict:
        c = lambda z: [complex(z).real, complex(z).imag]  # noqa: E731
        return {
            "M": {"a": c(self.M.a), "b": c(self.M.b)},
            "rect": {"center": c(self.rect.center), "half_width": self.rect.half_width,
                     "half_height": self.rect.half_height},
            "B0": {"center": c(self.B0.center), "radius": self.B0.radius},
            "C0": {"center": c(self.C0.center), "radius": self.C0.radius},
            "n_range": list(self.n_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnulusSystem":
        allowed = {"M", "rect", "B0", "C0", "n_range"}
        unknown = set(data) - allowed
        if unknown:
            raise GeometryError(f"unknown annulus-system keys: {sorted(unknown)}")
        z = lambda v: complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)  # noqa: E731
        r = data["rect"]
        return cls(
            Affine(z(data["M"]["a"]), z(data["M"]["b"])),
            Rect(z(r["center"]), float(r["half_width"]), float(r["half_height"])),
            Disc(z(data["B0"]["center"]), float(data["B0"]["radius"])),
            Disc(z(data["C0"]["center"]), float(data["C0"]["radius"])),
            tuple(data.get("n_range", (0, 19))),
        )


def translation_system(center: complex = math.pi, n_range=(0, 19), r: float = 0.5) -> AnnulusSystem:
    """Discs D(center, r) and D(center, r/2) in the rectangle of half-sides 3pi/2 and 3, stepping by 2pi."""
    return AnnulusSystem(
        Affine(1.0, 2 * math.pi),
        Rect(complex(center), 1.5 * math.pi, 3.0),
        Disc(complex(center), r),
        Disc(complex(center), r / 2),
        tuple(n_range),
    )


@dataclass(frozen=True)
class CheckMargin:
    raw: float
    bound: float

    @property
    def certified(self) -> float:
        return self.raw - self.bound

    @property
    def passed(self) -> bool:
        return self.raw > 0


@dataclass(frozen=True)
class GenerationReport:
    n: int
    margins: dict

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.margins.values())


@dataclass(frozen=True)
class CertReport:
    generations: tuple
    checks: tuple
    boundary_samples: int
    fill_samples: int
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed", all(g.passed for g in self.generations))

    def worst(self, check: str) -> float:
        return min(g.margins[check].raw for g in self.generations)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "checks": list(self.checks),
            "boundary_samples": self.boundary_samples,
            "fill_samples": self.fill_samples,
            "generations": [
                {
                    "n": g.n,
                    "pass": g.passed,
                    **{
                        name: {"raw": m.raw, "bound": m.bound, "certified": m.certified}
                        for name, m in g.margins.items()
                    },
                }
                for g in self.generations
            ],
        }


MapLike = Union[MapSpec, Callable[[np.ndarray], np.ndarray]]


def _evaluator(f: MapLike):
    if isinstance(f, MapSpec):
        def run(z):
            values, status = eval_map_array(f, z)
            if np.any(status != OK):
                raise SentinelError("sentinel while evaluating the map on the set system")
            return values
        return run
    return lambda z: np.asarray(f(np.asarray(z, dtype=complex)), dtype=complex)


def _loop_bound(images: np.ndarray) -> float:
    """Half the largest gap between images of consecutive samples on a closed loop."""
    return 0.5 * float(np.max(np.abs(np.roll(images, -1) - images)))


def _disc_fill(d: Disc, samples: int, rings: int) -> list:
    circle = np.exp(2j * np.pi * np.arange(samples) / samples)
    loops = [d.center + d.radius * (j / rings) * circle for j in range(1, rings + 1)]
    return [np.array([d.center])] + loops


def _generation(
    f, s: AnnulusSystem, n: int, samples: int, rings: int, checks: tuple, others: range
) -> GenerationReport:
    margins = {}
    Bn = s.disc(s.B0, n)
    target = s.disc(s.C0, n + 1)
    if "inner" in checks or "fill" in checks:
        loops = _disc_fill(Bn, samples, rings)
        images = [f(loop) for loop in loops]
        if "inner" in checks:
            img = images[-1]
            raw = target.radius - float(np.max(np.abs(img - target.center)))
            margins["inner"] = CheckMargin(raw, _loop_bound(img))
        if "fill" in checks:
            raw = target.radius - max(float(np.max(np.abs(img - target.center))) for img in images)
            bound = max(_loop_bound(img) for img in images[1:])
            # the step between rings matters too: compare consecutive rings pointwise
            for inner_ring, outer_ring in zip(images[1:-1], images[2:]):
                bound = max(bound, 0.5 * float(np.max(np.abs(outer_ring - inner_ring))))
            margins["fill"] = CheckMargin(raw, bound)
    if "outer" in checks:
        step = s.M.power(n)
        loop = step(s.rect.boundary(samples))
        img = f(loop)
        nxt = s.M.power(n + 1)
        raw = abs(nxt.a) * float(np.min(s.rect.signed_distance(nxt.inverse(img))))
        margins["outer"] = CheckMargin(raw, _loop_bound(img))
    if "disjoint" in checks:
        gaps = [
            abs(Bn.center - Bm.center) - Bn.radius - Bm.radius
            for Bm in (s.disc(s.B0, m) for m in others if m != n)
        ]
        # a lone generation has nothing to collide with; compare with its successor
        if not gaps:
            Bm = s.disc(s.B0, n + 1)
            gaps = [abs(Bn.center - Bm.center) - Bn.radius - Bm.radius]
        margins["disjoint"] = CheckMargin(float(min(gaps)), 0.0)
    return GenerationReport(n, margins)


def check_hypotheses(
    f: MapLike,
    s: AnnulusSystem,
    boundary_samples: int = 512,
    rings: int = 8,
    checks: tuple = ALL_CHECKS,
) -> CertReport:
    """Evaluate the four hypotheses for every generation in ``s.n_range``."""
    if boundary_samples < 256:
        raise GeometryError("boundary_samples must be >= 256")
    unknown = set(checks) - set(ALL_CHECKS)
    if unknown or not checks:
        raise GeometryError(f"unknown or empty checks: {sorted(unknown)}")
    lo, hi = s.n_range
    if isinstance(f, MapSpec):
        for n in range(lo, hi + 2):
            if s.contains_zero(n):
                raise GeometryError(f"generation {n} contains 0, which is outside C*")
    run = _evaluator(f)
    generations = tuple(
        _generation(run, s, n, boundary_samples, rings, tuple(checks), range(lo, hi + 1)) for n in range(lo, hi + 1)
    )
    fill = 1 + rings * boundary_samples if "fill" in checks else 0
    return CertReport(generations, tuple(checks), boundary_samples, fill)


def scan_start_generation(
    f: MapLike,
    s: AnnulusSystem,
    n_max: int,
    window: int = 5,
    boundary_samples: int = 512,
    checks: tuple = ALL_CHECKS,
) -> Optional[int]:
    """Smallest N <= n_max such that generations N..N+window-1 all pass.

    Generations whose rectangle contains 0 count as failures for C* maps.
    """
    if n_max < 1:
        raise GeometryError("n_max must be >= 1")
    run = _evaluator(f)
    cache: dict = {}

    def ok(n: int) -> bool:
        if n not in cache:
            if isinstance(f, MapSpec) and (s.contains_zero(n) or s.contains_zero(n + 1)):
                cache[n] = False
            else:
                try:
                    report = _generation(run, s, n, boundary_samples, 8, tuple(checks), range(n, n + window))
                    cache[n] = report.passed
                except SentinelError:
                    cache[n] = False
        return cache[n]

    for start in range(n_max + 1):
        if all(ok(n) for n in range(start, start + window)):
            return start
    return None
