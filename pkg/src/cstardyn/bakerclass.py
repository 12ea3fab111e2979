"""Numerical trichotomy of invariant Baker domains via the ratios

    c_n = |F^{n+1}(z0) - F^n(z0)| / dist(F^n(z0), boundary of U),   F = f^N.

The domain U is never known in closed form. It is represented by a
membership oracle: a point belongs to U when its F-orbit enters a declared
absorbing region (checked to be forward invariant) within a step budget.
Distances to the boundary are found by bisection along rays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import INF, OrbitBudget, Itinerary, itineraries_equivalent, iterate, itinerary_of_word
from .mapmodel import OK, MapSpec, ZeroInputError, eval_map_array

HYPERBOLIC_THRESHOLD = 0.1
VANISH_THRESHOLD = 0.05


class OracleError(ValueError):
    pass


class RegionNotInvariantError(OracleError):
    pass


class OracleRejectionError(OracleError):
    """The seed (or boundary-search center) is not in the domain."""


class OrbitLeftDomainError(OracleError):
    """The orbit hit 0 or a sentinel while computing c_n."""


@dataclass(frozen=True)
class Region:
    """Absorbing region candidate.

    kinds: ``"halfplane"`` is {Re z > R}; ``"inverted"`` is {Re(1/z) > R}, the
    image of the half-plane under z -> 1/z; ``"sector"`` is
    {|arg z - center| < half_angle, |z| > R}.
    """

    kind: str = "halfplane"
    R: float = 10.0
    half_angle: float = math.pi / 4
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in ("halfplane", "inverted", "sector"):
            raise OracleError(f"unknown region kind {self.kind!r}")
        if self.kind == "sector" and not (0 < self.half_angle <= math.pi and self.R >= 0):
            raise OracleError("sector needs 0 < half_angle <= pi and R >= 0")
        if self.kind == "inverted" and self.R <= 0:
            raise OracleError("inverted half-plane needs R > 0 so that it excludes a neighbourhood of infinity")

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            if self.kind == "halfplane":
                return z.real > self.R
            if self.kind == "inverted":
                return (z != 0) & ((1.0 / z).real > self.R)
            offset = np.angle(z * np.exp(-1j * self.center))
            return (np.abs(offset) < self.half_angle) & (np.abs(z) > self.R)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Points of a bounded box inside the region, used for the invariance check."""
        if self.kind in ("halfplane", "inverted"):
            scale = 10.0 * max(self.R, 1.0)
            pts = self.R + rng.uniform(0.0, scale, count) + 1j * rng.uniform(-scale, scale, count)
            pts[pts.real <= self.R] += 1e-9
            return pts if self.kind == "halfplane" else 1.0 / pts
        r0 = max(self.R, 1.0)
        radius = np.maximum(rng.uniform(r0, 10.0 * r0, count), np.nextafter(self.R, np.inf))
        arg = self.center + rng.uniform(-0.999, 0.999, count) * self.half_angle
        return radius * np.exp(1j * arg)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "R": self.R, "half_angle": self.half_angle, "center": self.center}


@dataclass(frozen=True)
class DomainOracle:
    """Membership oracle for the Fatou component containing an absorbing region.

    The region is checked for forward invariance under F = f^N on
    ``invariance_samples`` seeded points at construction.
    """

    map: MapSpec
    period: int = 1
    region: Region = field(default_factory=Region)
    itinerary: Itinerary = field(default_factory=lambda: Itinerary("", INF))
    max_steps: int = 200
    r_zero: float = 1e-12
    r_inf: float = 1e300
    invariance_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise OracleError("period must be >= 1")
        if not self.itinerary.period:
            raise OracleError("declared itinerary must be periodic")
        rng = np.random.default_rng(self.seed)
        pts = self.region.sample(rng, self.invariance_samples)
        images = self.apply_period(pts)
        bad = ~self.region.contains(images)
        if np.any(bad):
            raise RegionNotInvariantError(
                f"F maps {int(np.count_nonzero(bad))} of {pts.size} sampled region points outside the region"
            )

    def apply_period(self, z: np.ndarray) -> np.ndarray:
        """F = f^N on an array; entries that hit a sentinel become NaN."""
        z = np.asarray(z, dtype=complex)
        for _ in range(self.period):
            z, status = eval_map_array(self.map, z)
            z = np.where(status == OK, z, complex(np.nan, np.nan))
        return z

    def members(self, z) -> np.ndarray:
        """Boolean mask: does the F-orbit reach the region within ``max_steps``?

        Orbits that hit 0, a sentinel, or leave [r_zero, r_inf] in modulus
        before entering are classified as outside.
        """
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        cur = z.ravel().copy()
        result = np.zeros(cur.size, dtype=bool)
        idx = np.arange(cur.size)
        for step in range(self.max_steps + 1):
            inside = self.region.contains(cur) & (cur != 0)
            result[idx[inside]] = True
            with np.errstate(invalid="ignore"):
                modulus = np.abs(cur)
                alive = ~inside & np.isfinite(modulus) & (modulus >= self.r_zero) & (modulus <= self.r_inf)
            idx, cur = idx[alive], cur[alive]
            if cur.size == 0 or step == self.max_steps:
                break
            cur = self.apply_period(cur)
        return result.reshape(shape)

    def is_member(self, z) -> bool:
        return bool(self.members(np.array([complex(z)]))[0])

    def accepts(self, z0) -> bool:
        """Membership plus agreement of the essential itinerary with the declared one."""
        z0 = complex(z0)
        if z0 == 0 or not self.is_member(z0):
            return False
        entry = z0
        for _ in range(self.max_steps):
            if self.region.contains(np.array([entry]))[0]:
                break
            entry = complex(self.apply_period(np.array([entry]))[0])
        # Inside the invariant region the orbit stays put, so a few periods of symbols suffice.
        steps = 8 * self.period * max(len(self.itinerary.period), 1) + 2
        record = iterate(self.map, entry, OrbitBudget(max_iter=steps, r_inf=1e300, r_zero=1e-300))
        found = itinerary_of_word(record.symbols)
        return bool(found.period) and itineraries_equivalent(found, self.itinerary)


@dataclass(frozen=True)
class BoundaryEstimate:
    value: float
    unbounded_rays: int
    directions: int

    @property
    def all_unbounded(self) -> bool:
        return self.unbounded_rays == self.directions


def _boundary_batch(oracle: DomainOracle, ws: np.ndarray, directions: int, r_hi: np.ndarray, bisections: int):
    """Bisect along ``directions`` rays from every center at once.

    Ray 0 points at the origin. Its search interval is capped at |w| so that
    the origin itself (never a member) is always probed.
    """
    ws = np.asarray(ws, dtype=complex)
    r_hi = np.broadcast_to(np.asarray(r_hi, dtype=float), ws.shape)
    base = np.angle(-ws)
    angles = base[:, None] + 2 * np.pi * np.arange(directions)[None, :] / directions
    units = np.exp(1j * angles)
    hi = np.repeat(r_hi[:, None], directions, axis=1).astype(float)
    hi[:, 0] = np.minimum(hi[:, 0], np.abs(ws))
    lo = np.zeros_like(hi)
    centers = ws[:, None]
    # rays whose far end is still inside have no detectable flip
    far = centers + hi * units
    # ray 0 ends at the origin; pin it there exactly instead of a rounded neighbour
    far[:, 0] = np.where(hi[:, 0] == np.abs(ws), 0.0, far[:, 0])
    far_inside = oracle.members(far)
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        inside = oracle.members(centers + mid * units)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    # hi is the smallest radius known to be outside: the estimate errs high, by at most r_hi / 2**bisections
    flip = np.where(far_inside, r_hi[:, None], hi)
    return flip.min(axis=1), far_inside.sum(axis=1)


def estimate_boundary_dist(
    oracle: DomainOracle, w, directions: int = 64, r_hi: float = 10.0, bisections: int = 12
) -> BoundaryEstimate:
    """Minimum over rays of the radius at which membership flips."""
    w = complex(w)
    if directions < 1 or r_hi <= 0 or bisections < 1:
        raise OracleError("need directions >= 1, r_hi > 0 and bisections >= 1")
    if w == 0 or not oracle.is_member(w):
        raise OracleRejectionError(f"{w} is not in the domain")
    values, unbounded = _boundary_batch(oracle, np.array([w]), directions, np.array([r_hi]), bisections)
    return BoundaryEstimate(float(values[0]), int(unbounded[0]), directions)


def c_sequence(
    oracle: DomainOracle, z0, n_max: int, directions: int = 64, bisections: int = 12
) -> np.ndarray:
    """c_1..c_{n_max} along the F-orbit of z0, with ray length 2|F^n(z0)|."""
    z0 = complex(z0)
    if n_max < 1:
        raise OracleError("n_max must be >= 1")
    if z0 == 0:
        raise ZeroInputError("z0 must be nonzero")
    if not oracle.accepts(z0):
        raise OracleRejectionError(f"seed {z0} rejected by the domain oracle")
    orbit = [z0]
    for _ in range(n_max + 1):
        nxt = complex(oracle.apply_period(np.array([orbit[-1]]))[0])
        if not np.isfinite(nxt) or nxt == 0:
            raise OrbitLeftDomainError(f"orbit of {z0} left C* after {len(orbit) - 1} periods")
        orbit.append(nxt)
    orbit = np.array(orbit)
    w = orbit[1 : n_max + 1]
    steps = np.abs(orbit[2:] - w)
    dist, _ = _boundary_batch(oracle, w, directions, 2.0 * np.abs(w), bisections)
    return steps / dist


class BakerLabel(str, enum.Enum):
    HYPERBOLIC = "HYPERBOLIC"
    DOUBLY_PARABOLIC = "DOUBLY_PARABOLIC"
    UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class BakerVerdict:
    """``c_values[i]`` is the c_n sequence (n = 1..n_max) of ``seeds[i]``."""

    c_values: tuple
    label: BakerLabel
    liminf_estimate: float
    tail_slope: float
    tail_max: float
    seeds: tuple
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "liminf_estimate": self.liminf_estimate,
            "tail_slope": self.tail_slope,
            "tail_max": self.tail_max,
            "c_values": [list(map(float, c)) for c in self.c_values],
            "seeds": [[s.real, s.imag] for s in self.seeds],
            "flags": list(self.flags),
        }


def tail_slope(c: np.ndarray, n0: int) -> float:
    """Least-squares slope of log c_n against log n for n >= n0 (1-based n)."""
    n = np.arange(1, len(c) + 1)[n0 - 1 :]
    tail = np.asarray(c)[n0 - 1 :]
    if tail.size < 2 or np.any(tail <= 0):
        return math.nan
    return float(np.polyfit(np.log(n), np.log(tail), 1)[0])


def classify_baker(
    oracle: DomainOracle,
    seeds,
    n_max: int = 200,
    directions: int = 64,
    bisections: int = 12,
    hyperbolic_threshold: float = HYPERBOLIC_THRESHOLD,
    vanish_threshold: float = VANISH_THRESHOLD,
) -> BakerVerdict:
    """HYPERBOLIC if every seed keeps c_n above the threshold after the burn-in
    n0 = n_max // 4; DOUBLY_PARABOLIC if every seed's tail stays below the vanish
    threshold and decreases (log-log slope < 0); UNDECIDED otherwise."""
    if n_max < 4:
        raise OracleError("n_max must be >= 4")
    n0 = max(n_max // 4, 1)
    accepted, sequences, flags = [], [], []
    for s in seeds:
        s = complex(s)
        try:
            c = c_sequence(oracle, s, n_max, directions, bisections)
        except OracleError as exc:
            flags.append(f"seed {s}: {exc}")
            continue
        accepted.append(s)
        sequences.append(c)
    if not accepted:
        raise OracleRejectionError("all seeds rejected: " + "; ".join(flags))
    tails = [c[n0 - 1 :] for c in sequences]
    liminf = float(min(t.min() for t in tails))
    tail_max = float(max(t.max() for t in tails))
    slopes = [tail_slope(c, n0) for c in sequences]
    slope = max(slopes) if not any(math.isnan(s) for s in slopes) else math.nan
    if liminf > hyperbolic_threshold:
        label = BakerLabel.HYPERBOLIC
    elif tail_max < vanish_threshold and slope < 0:
        label = BakerLabel.DOUBLY_PARABOLIC
    else:
        label = BakerLabel.UNDECIDED
    return BakerVerdict(
        tuple(tuple(c) for c in sequences), label, liminf, slope, tail_max, tuple(accepted), tuple(flags)
    )
