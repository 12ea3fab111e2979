"""Combinatorics and geometry behind maps with prescribed escaping dynamics.

* Orderings of an itinerary: ``pi_order`` numbers the visits to the
  neighbourhoods of infinity (1, 2, ...) and of zero (-1, -2, ...), and
  ``successor`` follows the orbit from one visit to the next.
* ``delta`` / ``delta_p``: vertical gap between the boundaries of log W and
  log(lambda W) for W = {Re z >= 2} and its p-th root.
* ``SectorSystem``: sectors V_m = omega^m W^{1/N} permuted cyclically by the
  model map z -> omega (lambda z^N)^{1/N}.
* ``epsilon_budget`` / ``check_budget``: approximation error allowance that
  keeps the perturbed map inside the sectors.
* ``AnnulusSectors``: annulus sectors A_m on which log f should be close to
  the constant a_{s(m)}; ``check_target_map`` tests a candidate map.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import INF, ZERO, from_ascii, to_ascii
from .exprcore import ipow
from .mapmodel import OK, MapSpec, eval_map_array


class ConstructionError(ValueError):
    pass


class DomainGuardError(ConstructionError):
    """delta was asked for a radius where the arccos arguments leave (0, 1)."""


class NoSectorError(ConstructionError):
    """The point lies in none of the sectors (or on a branch-cut ray)."""


# -- itinerary combinatorics ----------------------------------------------------

@dataclass(frozen=True)
class PeriodicItinerary:
    """One period of an itinerary over {"0", "∞"}."""

    word: str

    def __post_init__(self):
        if not self.word:
            raise ConstructionError("itinerary word must be nonempty")
        if any(c not in (INF, ZERO) for c in self.word):
            raise ConstructionError(f"invalid itinerary word {self.word!r}")

    @classmethod
    def parse(cls, text: str) -> "PeriodicItinerary":
        try:
            return cls(from_ascii(text))
        except ValueError as exc:
            raise ConstructionError(str(exc)) from None

    @property
    def N(self) -> int:
        return len(self.word)

    def symbol(self, k: int) -> str:
        return self.word[k % self.N]

    def __str__(self) -> str:
        return to_ascii(self.word)


def pq_counts(e: PeriodicItinerary) -> tuple[int, int]:
    """(number of ∞ symbols, number of 0 symbols) in one period."""
    p = e.word.count(INF)
    return p, e.N - p


def pi_order(e: PeriodicItinerary, k: int) -> int:
    """Visit number of step k in the periodic sequence: +j for the j-th ∞, -j for the j-th 0."""
    if k < 0:
        raise ConstructionError("k must be >= 0")
    full, rest = divmod(k, e.N)
    p, q = pq_counts(e)
    head = e.word[:rest]
    if e.symbol(k) == INF:
        return full * p + head.count(INF) + 1
    return -(full * q + head.count(ZERO)) - 1


def pi_inverse(e: PeriodicItinerary, m: int) -> int:
    """The step k >= 0 with pi_order(e, k) = m."""
    p, q = pq_counts(e)
    if m == 0 or (m > 0 and p == 0) or (m < 0 and q == 0):
        raise ConstructionError(f"{m} is not in the range of the ordering")
    symbol, count = (INF, p) if m > 0 else (ZERO, q)
    full, j = divmod(abs(m) - 1, count)
    positions = [i for i, c in enumerate(e.word) if c == symbol]
    return full * e.N + positions[j]


def successor(e: PeriodicItinerary, m: int) -> int:
    """s(m) = pi(pi^{-1}(m) + 1 mod N) on {-q..-1} u {1..p}."""
    p, q = pq_counts(e)
    if not (1 <= m <= p or -q <= m <= -1):
        raise ConstructionError(f"m = {m} outside {{-{q}..-1}} u {{1..{p}}}")
    return pi_order(e, (pi_inverse(e, m) + 1) % e.N)


def successor_sequence(e: PeriodicItinerary, m: int) -> int:
    """s(m) = pi(pi^{-1}(m) + 1) with pi running along the whole infinite sequence."""
    return pi_order(e, pi_inverse(e, m) + 1)


# -- boundary gaps --------------------------------------------------------------

def delta(r: float, lam: float) -> float:
    """arccos(2/e^r) - arccos(2 lam/e^r), evaluated without cancellation."""
    if not lam > 1:
        raise ConstructionError("lambda must be > 1")
    if not (r > 0 and math.exp(min(r, 700.0)) > 2 * lam):
        raise DomainGuardError(f"need e^r > 2*lambda; got r = {r}, lambda = {lam}")
    a = 2.0 * math.exp(-r)
    b = lam * a
    # arccos a - arccos b = arcsin(b sqrt(1-a^2) - a sqrt(1-b^2)) for 0 < a < b < 1
    return math.asin(b * math.sqrt(1.0 - a * a) - a * math.sqrt(1.0 - b * b))


def delta_p(r: float, lam: float, p: int) -> float:
    """Gap for the p-th root of the half-plane: delta(p r) / p."""
    if p < 1:
        raise ConstructionError("p must be >= 1")
    return delta(p * r, lam) / p


# -- sectors and model map ---------------------------------------------------------

@dataclass(frozen=True)
class SectorSystem:
    """Sectors V_m = omega^m W^{1/N}, W = {Re z >= 2}, root branch |arg| < pi/N."""

    N: int
    lam: float

    def __post_init__(self):
        if self.N < 1:
            raise ConstructionError("N must be >= 1")
        if not self.lam > 1:
            raise ConstructionError("lambda must be > 1")

    @property
    def omega(self) -> complex:
        return cmath.exp(2j * math.pi / self.N)

    @property
    def ray_angle(self) -> float:
        """Direction of the ray R kept away from the sectors."""
        return math.pi if self.N % 2 else math.pi * (1.0 - 1.0 / self.N)

    def boundary_curve(self, radius: float, count: int = 50_001) -> np.ndarray:
        """Points of the boundary of V_0 with modulus up to about ``radius``."""
        return _boundary_curve(self.N, float(radius), count)

    def dist_to_ray(self) -> float:
        """dist(V, R) from the sampled boundaries of all sectors."""
        curve = self.boundary_curve(1e4 ** (1.0 / self.N) * 4.0)
        unit = cmath.exp(1j * self.ray_angle)
        best = math.inf
        for m in range(self.N):
            pts = curve * self.omega**m / unit  # ray becomes the positive real axis
            dist = np.where(pts.real > 0, np.abs(pts.imag), np.abs(pts))
            best = min(best, float(dist.min()))
        return best

    @property
    def d(self) -> float:
        return min((2.0 ** (1.0 / self.N) - 1.0) / 3.0, self.dist_to_ray() / 4.0)

    def sector_of(self, z: complex) -> int:
        """Index m with z in V_m; raises :class:`NoSectorError` otherwise."""
        z = complex(z)
        for m in range(self.N):
            u = z / self.omega**m
            if u != 0 and abs(math.atan2(u.imag, u.real)) < math.pi / self.N and ipow(u, self.N).real >= 2.0:
                return m
        raise NoSectorError(f"{z} lies in no sector V_m")

    def sample(self, m: int, count: int, radius: float, rng: np.random.Generator) -> np.ndarray:
        """``count`` random points of V_m with modulus at most ``radius``."""
        lo = 2.0 ** (1.0 / self.N)
        if radius <= lo:
            raise ConstructionError(f"radius must exceed {lo}")
        half = math.pi / (2 * self.N)
        out = []
        while sum(len(o) for o in out) < count:
            rho = rng.uniform(lo, radius, 4 * count)
            phi = rng.uniform(-half, half, 4 * count)
            keep = rho**self.N * np.cos(self.N * phi) >= 2.0
            out.append(rho[keep] * np.exp(1j * phi[keep]))
        pts = np.concatenate(out)[:count]
        return pts * self.omega**m

    def depth(self, z: np.ndarray, m: int, radius: float) -> np.ndarray:
        """Signed distance to the boundary of V_m: positive inside.

        The boundary is sampled up to ``radius``; the result is accurate for
        points whose nearest boundary point lies within that radius.
        """
        u = np.asarray(z, dtype=complex) / self.omega**m
        dist = _curve_distance(self.N, float(radius), u)
        with np.errstate(invalid="ignore"):
            inside = (np.abs(np.angle(u)) < math.pi / self.N) & ((u**self.N).real >= 2.0)
        return np.where(inside, dist, -dist)


@lru_cache(maxsize=64)
def _boundary_curve(N: int, radius: float, count: int) -> np.ndarray:
    # the boundary is the N-th root of the line Re w = 2; sinh spacing keeps
    # the samples dense near the vertex and sparse far out
    top = math.sqrt(max(radius ** (2 * N) - 4.0, 0.0)) + 1.0
    t = np.linspace(-1.0, 1.0, count)
    y = np.sinh(t * math.asinh(top))
    return (2.0 + 1j * y) ** (1.0 / N)


_POLYLINE_POINTS = 4001


@lru_cache(maxsize=64)
def _boundary_tree(N: int, radius: float) -> tuple:
    curve = _boundary_curve(N, radius, _POLYLINE_POINTS)
    return curve, cKDTree(np.column_stack([curve.real, curve.imag]))


def _curve_distance(N: int, radius: float, u: np.ndarray, neighbours: int = 4) -> np.ndarray:
    """Distance from ``u`` to the sampled boundary polyline of V_0.

    The nearest samples come from a KD-tree; the distance is then measured
    exactly to the polyline segments on either side of each of them.
    """
    curve, tree = _boundary_tree(N, radius)
    flat = np.ravel(u)
    _, idx = tree.query(np.column_stack([flat.real, flat.imag]), k=neighbours)
    best = np.full(flat.shape, np.inf)
    for j in idx.T:
        for a_idx, b_idx in ((j - 1, j), (j, j + 1)):
            a_idx = np.clip(a_idx, 0, curve.size - 1)
            b_idx = np.clip(b_idx, 0, curve.size - 1)
            a, b = curve[a_idx], curve[b_idx]
            seg = b - a
            length2 = np.abs(seg) ** 2
            with np.errstate(invalid="ignore", divide="ignore"):
                t = np.where(length2 > 0, ((flat - a) * seg.conjugate()).real / length2, 0.0)
            foot = a + np.clip(t, 0.0, 1.0) * seg
            best = np.minimum(best, np.abs(flat - foot))
    return best.reshape(np.shape(u))


def model_map_entire(sys: SectorSystem, z: complex) -> complex:
    """omega^{m+1} (lam (z / omega^m)^N)^{1/N} for z in V_m, principal root."""
    m = sys.sector_of(z)
    u = complex(z) / sys.omega**m
    # principal N-th root via exp/log; complex ** raises on subnormal intermediates
    return sys.omega ** (m + 1) * cmath.exp(cmath.log(sys.lam * ipow(u, sys.N)) / sys.N)


def model_map_array(sys: SectorSystem, z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`model_map_entire`; points outside every sector give NaN."""
    z = np.asarray(z, dtype=complex)
    out = np.full(z.shape, complex(np.nan, np.nan))
    for m in range(sys.N):
        u = z / sys.omega**m
        with np.errstate(invalid="ignore"):
            sel = (np.abs(np.angle(u)) < math.pi / sys.N) & ((u**sys.N).real >= 2.0) & np.isnan(out)
        out[sel] = sys.omega ** (m + 1) * (sys.lam * u[sel] ** sys.N) ** (1.0 / sys.N)
    return out


@dataclass(frozen=True)
class ContainmentReport:
    min_margin: float
    d: float
    samples: int
    radius: float

    @property
    def passed(self) -> bool:
        return self.min_margin >= self.d


def check_model_containment(
    sys: SectorSystem, samples: int = 1000, radius: Optional[float] = None, seed: int = 0
) -> ContainmentReport:
    """Sample each V_m (modulus <= radius) and measure how deep the images sit in V_{m+1}.

    The gap between the boundaries of V and of its image shrinks like
    |z|^{1-N} far out, so the check is posed on a bounded core: |z| <= 2 by
    default, or |z| <= 4 when N = 1 (where the vertex itself sits at 2).
    """
    if radius is None:
        radius = 2.0 if sys.N > 1 else 4.0
    rng = np.random.default_rng(seed)
    worst = math.inf
    reach = radius * sys.lam ** (1.0 / sys.N) * 2.0
    for m in range(sys.N):
        pts = sys.sample(m, samples, radius, rng)
        images = model_map_array(sys, pts)
        worst = min(worst, float(sys.depth(images, (m + 1) % sys.N, reach).min()))
    return ContainmentReport(worst, sys.d, samples, radius)


# -- approximation budget ----------------------------------------------------------

def epsilon_budget(r: float, N: int, d_prime: float, k: float) -> float:
    """min(d', k^{-(N+1)}, r^{-(N+1)})."""
    if not (d_prime > 0 and k > 0 and r > 0):
        raise ConstructionError("need d' > 0, k > 0 and r > 0")
    return min(d_prime, k ** -(N + 1), r ** -(N + 1))


def d_prime_for(d: float) -> float:
    """Largest d' with |e^z - 1| < d whenever |z| < d' (from |e^z - 1| <= e^|z| - 1)."""
    return math.log1p(d)


def check_budget(lam: float, N: int, d_prime: float, k: float, r_range=None, samples: int = 400) -> bool:
    """Whether eps(r) < delta_N(ln(lam r)) on a log-spaced grid of ``r_range`` (default [k, 10k])."""
    lo, hi = r_range if r_range is not None else (k, 10.0 * k)
    if not 0 < lo <= hi:
        raise ConstructionError("r_range must satisfy 0 < lo <= hi")
    for r in np.geomspace(lo, hi, samples):
        try:
            gap = delta_p(math.log(lam * r), lam, N)
        except DomainGuardError:
            return False
        if not epsilon_budget(float(r), N, d_prime, k) < gap:
            return False
    return True


def scan_k(lam: float, N: int, d_prime: float, k_min: float = 1.0, k_max: float = 1e6, ratio: float = 1.01):
    """Smallest k on a geometric grid for which :func:`check_budget` passes on [k, 10k]."""
    k = k_min
    while k <= k_max:
        if check_budget(lam, N, d_prime, k):
            return k
        k *= ratio
    return None


# -- annulus sectors for wandering targets -----------------------------------------

@dataclass(frozen=True)
class AnnulusSectors:
    """A_m = {|arg z| <= R, k_m <= |z| <= k_m e^{2R}} for m >= 1 and A_{-m} = 1/A_m.

    log A_m is the square of side 2R centred at a_m = ln k_m + R (and -a_m for
    negative m).
    """

    R: float
    k: tuple

    def __post_init__(self):
        if not 0 < self.R < math.pi / 2:
            raise ConstructionError("R must lie in (0, pi/2)")
        if not self.k:
            raise ConstructionError("need at least one radius")
        if self.k[0] <= 2.5:
            raise ConstructionError("k_1 must exceed 5/2")
        for a, b in zip(self.k, self.k[1:]):
            if not b > a + 0.25:
                raise ConstructionError("radii must satisfy k_{m+1} > k_m + 1/4")

    @classmethod
    def generate(cls, R: float, count: int, k1: float = 3.0, gap: float = 0.5) -> "AnnulusSectors":
        """Radii k_{m+1} = k_m e^{2R} + gap, which keeps consecutive sectors disjoint."""
        k = [k1]
        for _ in range(count - 1):
            k.append(k[-1] * math.exp(2 * R) + gap)
        return cls(R, tuple(k))

    @property
    def count(self) -> int:
        return len(self.k)

    def a(self, m: int) -> float:
        if m == 0 or abs(m) > self.count:
            raise ConstructionError(f"no sector with index {m}")
        value = math.log(self.k[abs(m) - 1]) + self.R
        return value if m > 0 else -value

    def disjoint(self) -> bool:
        """Whether the A_m, m >= 1, are pairwise disjoint (their radial ranges do not meet)."""
        return all(b > a * math.exp(2 * self.R) for a, b in zip(self.k, self.k[1:]))

    def contains(self, z: np.ndarray, m: int) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.log(z) if m > 0 else -np.log(z)
        lo = math.log(self.k[abs(m) - 1])
        return (np.abs(w.imag) <= self.R) & (w.real >= lo) & (w.real <= lo + 2 * self.R)

    def sample(self, m: int, per_side: int = 32) -> np.ndarray:
        """Grid points of A_m (uniform in log coordinates)."""
        a = abs(self.a(m))
        s = np.linspace(-self.R, self.R, per_side)
        w = (a + s[:, None]) + 1j * s[None, :]
        z = np.exp(w.ravel())
        return z if m > 0 else 1.0 / z


B_PLUS = (2.0 + 0j, 0.25)
B_MINUS = (32.0 / 63.0 + 0j, 4.0 / 63.0)


def invert_disc(center: complex, radius: float) -> tuple[complex, float]:
    """Image of the closed disc D(center, radius), not containing 0, under z -> 1/z."""
    c = complex(center)
    if abs(c) <= radius:
        raise ConstructionError("disc contains 0")
    denom = abs(c) ** 2 - radius**2
    return c.conjugate() / denom, radius / denom


@dataclass(frozen=True)
class TargetReport:
    worst: dict
    R: float

    @property
    def passed(self) -> bool:
        return all(v < self.R / 2 for v in self.worst.values())


def check_target_map(
    f: Union[MapSpec, Callable[[np.ndarray], np.ndarray]],
    sectors: AnnulusSectors,
    e: PeriodicItinerary,
    per_side: int = 32,
) -> TargetReport:
    """max over A_m of |log f(z) - a_{s(m)}| for every m whose successor has a sector.

    ``log`` is the principal branch; passing means every maximum is below R/2.
    """
    if isinstance(f, MapSpec):
        def run(z):
            values, status = eval_map_array(f, z)
            return np.where(status == OK, values, complex(np.nan, np.nan))
    else:
        run = f
    p, q = pq_counts(e)
    worst = {}
    for m in list(range(1, sectors.count + 1)) + list(range(-1, -sectors.count - 1, -1)):
        if (m > 0 and p == 0) or (m < 0 and q == 0):
            continue
        target = successor_sequence(e, m)
        if abs(target) > sectors.count:
            continue
        z = sectors.sample(m, per_side)
        with np.errstate(all="ignore"):
            err = np.abs(np.log(np.asarray(run(z), dtype=complex)) - sectors.a(target))
        worst[m] = float(np.nanmax(err)) if not np.any(np.isnan(err)) else math.inf
    return TargetReport(worst, sectors.R)
