"""Orbits, escape detection toward 0 and infinity, and essential itineraries.

Symbols are the characters ``"0"`` (|z| <= 1) and ``"∞"`` (|z| > 1). For
command lines and files the ASCII form uses ``"i"`` in place of ``"∞"``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exprcore import Sentinel
from .mapmodel import OK, OVERFLOW, MapSpec, ZeroInputError, eval_map_array

INF = "∞"
ZERO = "0"
_ASCII = {"i": INF, "∞": INF, "0": ZERO}


def from_ascii(word: str) -> str:
    """Map a word over {"0", "i"} (``"∞"`` also accepted) to the internal alphabet."""
    try:
        return "".join(_ASCII[c] for c in word)
    except KeyError as exc:
        raise ValueError(f"invalid itinerary symbol {exc.args[0]!r}; use '0' and 'i'") from None


def to_ascii(word: str) -> str:
    return word.replace(INF, "i")


class Verdict(str, enum.Enum):
    ESCAPING = "ESCAPING"
    BOUNDED_SUSPECT = "BOUNDED_SUSPECT"
    UNDECIDED = "UNDECIDED"


_CODES = {Verdict.UNDECIDED: 0, Verdict.ESCAPING: 1, Verdict.BOUNDED_SUSPECT: 2}
VERDICT_OF_CODE = {v: k for k, v in _CODES.items()}
ESCAPING_CODE = _CODES[Verdict.ESCAPING]
BOUNDED_CODE = _CODES[Verdict.BOUNDED_SUSPECT]
UNDECIDED_CODE = _CODES[Verdict.UNDECIDED]


@dataclass(frozen=True)
class OrbitBudget:
    """Numerical stand-in for the asymptotic condition omega(z, f) in {0, inf}.

    ``max_iter`` bounds the number of recorded points (z0 included). An orbit is declared
    escaping once ``confirm_steps`` consecutive points lie outside the annulus
    ``r_zero <= |z| <= r_inf``. A point within ``recur_tol * min(1, |z|)`` of one of the
    previous ``recur_window`` points marks the orbit as bounded.
    """

    max_iter: int = 1000
    r_inf: float = 1e12
    r_zero: float = 1e-12
    confirm_steps: int = 3
    recur_tol: float = 1e-9
    recur_window: int = 16

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.r_inf > 1.0 > self.r_zero > 0.0):
            raise ValueError("need r_inf > 1 > r_zero > 0")
        if self.confirm_steps < 1 or self.recur_window < 1:
            raise ValueError("confirm_steps and recur_window must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_iter": self.max_iter,
            "r_inf": self.r_inf,
            "r_zero": self.r_zero,
            "confirm_steps": self.confirm_steps,
            "recur_tol": self.recur_tol,
            "recur_window": self.recur_window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OrbitBudget":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValueError(f"unknown orbit budget keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class OrbitRecord:
    """A finite orbit ``points[k] = f^k(z0)`` for k = 0..first_passage.

    When the orbit ends on an overflow/underflow sentinel, the final point is
    stored as ``inf`` or ``0`` and ``sentinel`` says which.
    """

    points: tuple
    symbols: str
    verdict: Verdict
    first_passage: int
    sentinel: Optional[Sentinel] = None


@dataclass(frozen=True)
class OrbitClasses:
    """Per-point summary produced by :func:`classify_points`.

    ``prefix`` packs the first symbols as bits (bit k set when symbol k is ``∞``);
    ``tail`` packs the last 32 symbols with the most recent in bit 0.
    """

    verdict: np.ndarray
    first_passage: np.ndarray
    prefix: np.ndarray
    tail: np.ndarray
    prefix_len: int


def _run(m: MapSpec, z0: np.ndarray, budget: OrbitBudget, prefix_len: int, record: bool):
    npts = z0.size
    verdict = np.full(npts, UNDECIDED_CODE, dtype=np.int8)
    first = np.full(npts, budget.max_iter - 1, dtype=np.int64)
    prefix = np.zeros(npts, dtype=np.uint64)
    tail = np.zeros(npts, dtype=np.uint64)
    final_status = np.zeros(npts, dtype=np.int8)
    history = [] if record else None

    idx = np.arange(npts)
    z = z0.copy()
    status = np.zeros(npts, dtype=np.int8)
    count = np.zeros(npts, dtype=np.int64)
    window = budget.recur_window
    ring = np.full((window, npts), complex(np.inf, 0.0))
    mask32 = np.uint64(0xFFFFFFFF)

    for k in range(budget.max_iter):
        if record:
            snapshot = np.full(npts, complex(np.nan, np.nan))
            snapshot[idx] = z
            history.append(snapshot)
        modulus = np.abs(z)
        sym = (modulus > 1.0).astype(np.uint64)
        tail[idx] = ((tail[idx] << np.uint64(1)) | sym) & mask32
        if k < prefix_len:
            prefix[idx] |= sym << np.uint64(k)
        outside = (modulus > budget.r_inf) | (modulus < budget.r_zero) | (status != OK)
        count = np.where(outside, count + 1, 0)
        escaped = (status != OK) | (count >= budget.confirm_steps)
        if k > 0:
            with np.errstate(invalid="ignore"):
                # distances are relative below the unit circle, so orbits tending to 0 do not look recurrent
                scale = np.minimum(modulus, 1.0)
                recurred = (np.min(np.abs(ring - z), axis=0) < budget.recur_tol * scale) & ~escaped
        else:
            recurred = np.zeros(z.shape, dtype=bool)
        finished = escaped | recurred
        if k == budget.max_iter - 1:
            finished[:] = True
        if np.any(finished):
            done = idx[finished]
            verdict[done] = np.where(
                escaped[finished], ESCAPING_CODE, np.where(recurred[finished], BOUNDED_CODE, UNDECIDED_CODE)
            )
            first[done] = k
            final_status[done] = status[finished]
            keep = ~finished
            idx, z, status, count, ring = idx[keep], z[keep], status[keep], count[keep], ring[:, keep]
            if idx.size == 0:
                break
        ring[k % window] = z
        z, status = eval_map_array(m, z)
    return verdict, first, prefix, tail, final_status, history


def classify_points(m: MapSpec, z0, budget: OrbitBudget, prefix_len: int = 8) -> OrbitClasses:
    """Run :func:`iterate`'s stopping rules on many seeds at once (no orbit storage)."""
    z0 = np.asarray(z0, dtype=complex)
    shape = z0.shape
    if np.any(z0 == 0):
        raise ZeroInputError("seeds must be nonzero")
    if not 0 <= prefix_len <= 32:
        raise ValueError("prefix_len must be in [0, 32]")
    verdict, first, prefix, tail, _, _ = _run(m, z0.ravel(), budget, prefix_len, record=False)
    return OrbitClasses(
        verdict.reshape(shape), first.reshape(shape), prefix.reshape(shape), tail.reshape(shape), prefix_len
    )


def iterate(m: MapSpec, z0, budget: OrbitBudget = OrbitBudget()) -> OrbitRecord:
    """Iterate ``m`` from ``z0`` until a verdict is reached.

    ESCAPING: ``confirm_steps`` consecutive points outside [r_zero, r_inf] in
    modulus, or a sentinel. BOUNDED_SUSPECT: a point returns within
    ``recur_tol * min(1, |z|)`` of one of the recent points. UNDECIDED: ``max_iter`` points
    recorded without either.
    """
    z0 = complex(z0)
    if z0 == 0:
        raise ZeroInputError("z0 must be nonzero")
    verdict, first, _, _, final_status, history = _run(m, np.array([z0]), budget, 0, record=True)
    k = int(first[0])
    points = tuple(complex(h[0]) for h in history[: k + 1])
    symbols = "".join(INF if abs(p) > 1.0 else ZERO for p in points)
    sentinel = None
    if final_status[0] != OK:
        sentinel = Sentinel.OVERFLOW if final_status[0] == OVERFLOW else Sentinel.UNDERFLOW
    return OrbitRecord(points, symbols, VERDICT_OF_CODE[int(verdict[0])], k, sentinel)


# -- itineraries --------------------------------------------------------------

def primitive_root(word: str) -> str:
    """Shortest word u with word = u^k."""
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


class AperiodicItineraryError(ValueError):
    pass


class NotEscapingError(ValueError):
    pass


@dataclass(frozen=True)
class Itinerary:
    """Eventually periodic symbol sequence ``preperiod + period + period + ...``.

    An empty ``period`` means no period was detected within the budget.
    """

    preperiod: str
    period: str

    def __post_init__(self):
        for c in self.preperiod + self.period:
            if c not in (INF, ZERO):
                raise ValueError(f"invalid symbol {c!r}")
        if self.period and primitive_root(self.period) != self.period:
            raise ValueError(f"period {self.period!r} is not primitive")

    @classmethod
    def parse(cls, preperiod: str, period: str) -> "Itinerary":
        return cls(from_ascii(preperiod), from_ascii(period))

    @property
    def periodic(self) -> bool:
        return bool(self.period)

    def __str__(self) -> str:
        return f"{self.preperiod}({self.period})" if self.period else self.preperiod + "..."

    def to_dict(self) -> dict:
        return {"preperiod": to_ascii(self.preperiod), "period": to_ascii(self.period)}


def itinerary_of_word(symbols: str, period_cap: int = 32) -> Itinerary:
    """Detect an eventually periodic tail by suffix matching on the second half."""
    length = len(symbols)
    start = length // 2
    tail = symbols[start:]
    for p in range(1, min(period_cap, len(tail) // 2) + 1):
        if all(tail[i] == tail[i + p] for i in range(len(tail) - p)):
            j = start
            while j > 0 and symbols[j - 1] == symbols[j - 1 + p]:
                j -= 1
            return Itinerary(symbols[:j], symbols[j : j + p])
    return Itinerary(symbols, "")


def essential_itinerary(record: OrbitRecord, period_cap: int = 32) -> Itinerary:
    if record.verdict is not Verdict.ESCAPING:
        raise NotEscapingError(f"orbit verdict is {record.verdict.value}, not ESCAPING")
    return itinerary_of_word(record.symbols, period_cap)


def itineraries_equivalent(a: Itinerary, b: Itinerary) -> bool:
    """Whether some shifts of the two sequences coincide.

    Only decidable for eventually periodic sequences, where it reduces to the
    primitive periods being cyclic rotations of each other.
    """
    if not (a.period and b.period):
        raise AperiodicItineraryError("equivalence needs periodic itineraries")
    pa, pb = primitive_root(a.period), primitive_root(b.period)
    return len(pa) == len(pb) and pb in pa + pa


def write_orbit_csv(record: OrbitRecord, fh) -> None:
    """CSV with header ``k,re,im,abs,symbol``; symbols in the ASCII alphabet."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["k", "re", "im", "abs", "symbol"])
    for k, (p, s) in enumerate(zip(record.points, record.symbols)):
        writer.writerow([k, repr(p.real), repr(p.imag), repr(abs(p)), to_ascii(s)])
