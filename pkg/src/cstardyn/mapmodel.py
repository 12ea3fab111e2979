"""Self-maps of the punctured plane in the form f(z) = z**n * exp(g(z) + h(1/z)).

Also computes the index of ``f`` (winding number of f around 0 along a circle)
and builds the exponential lift  ft(z) = n*z + g(e**z) + h(e**-z), which
satisfies exp(ft(z)) = f(exp(z)).
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exprcore import (
    VAR,
    ExprNode,
    Sentinel,
    binary,
    compile_expr,
    const,
    eval_expr,
    ipow,
    parse_expr,
    to_string,
    unary,
)

MAX_INDEX = 64
DEFAULT_CLAMP = 700.0

# status codes used by the array evaluators
OK = 0
OVERFLOW = 1
UNDERFLOW = -1


class MapError(ValueError):
    pass


class ZeroInputError(MapError):
    """The map was evaluated at z = 0, which is not in the domain."""


class SentinelError(MapError):
    """An evaluation hit the overflow/underflow sentinel where a finite value is required."""


class AliasingError(MapError):
    """Consecutive argument samples jumped by pi/2 or more; more samples are needed."""


@dataclass(frozen=True)
class MapSpec:
    """f(z) = z**n * exp(g(z) + h(1/z)); ``h`` is written in the variable z and evaluated at 1/z."""

    n: int
    g: ExprNode
    h: ExprNode
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool):
            raise MapError("index n must be an integer")
        if abs(self.n) > MAX_INDEX:
            raise MapError(f"|n| must be <= {MAX_INDEX}, got {self.n}")

    @classmethod
    def parse(cls, n: int, g: str, h: str, name: str = "") -> "MapSpec":
        return cls(int(n), parse_expr(g), parse_expr(h), name)

    @classmethod
    def from_dict(cls, data: dict) -> "MapSpec":
        unknown = set(data) - {"n", "g", "h"}
        if unknown:
            raise MapError(f"unknown MapSpec keys: {sorted(unknown)}")
        missing = {"n", "g", "h"} - set(data)
        if missing:
            raise MapError(f"missing MapSpec keys: {sorted(missing)}")
        if not isinstance(data["n"], int):
            raise MapError("'n' must be an integer")
        return cls.parse(data["n"], str(data["g"]), str(data["h"]))

    @classmethod
    def from_json(cls, text: str) -> "MapSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"n": self.n, "g": to_string(self.g), "h": to_string(self.h)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def is_real(self) -> bool:
        return self.g.is_real() and self.h.is_real()

    def __call__(self, z):
        return eval_map(self, z)


def _classify_exponent(w: complex, clamp: float):
    if isinstance(w, Sentinel):
        return Sentinel.OVERFLOW
    if w.real > clamp:
        return Sentinel.OVERFLOW
    if w.real < -clamp:
        return Sentinel.UNDERFLOW
    return None


def eval_map(m: MapSpec, z, clamp: float = DEFAULT_CLAMP):
    """Evaluate f at a nonzero point.

    Returns a nonzero complex value, or a :class:`Sentinel` when the real part of
    the exponent g(z) + h(1/z) leaves [-clamp, clamp] or the product leaves the
    double range.
    """
    z = complex(z)
    if z == 0:
        raise ZeroInputError("maps of C* are undefined at 0")
    gz = eval_expr(m.g, z)
    hz = eval_expr(m.h, 1 / z)
    if isinstance(gz, Sentinel) or isinstance(hz, Sentinel):
        return Sentinel.OVERFLOW
    w = gz + hz
    flag = _classify_exponent(w, clamp)
    if flag is not None:
        return flag
    value = ipow(z, m.n) * cmath.exp(w)
    if not cmath.isfinite(value):
        return Sentinel.OVERFLOW
    if value == 0:
        return Sentinel.UNDERFLOW
    return value


def eval_map_array(m: MapSpec, z: np.ndarray, clamp: float = DEFAULT_CLAMP):
    """Vectorized :func:`eval_map`.

    Returns ``(values, status)``. ``status`` is ``OK``, ``OVERFLOW`` or
    ``UNDERFLOW`` per entry; sentinel entries hold ``inf`` or ``0``. Zero
    inputs are reported as ``UNDERFLOW`` rather than raised, so callers that
    must reject them should check beforehand.
    """
    z = np.asarray(z, dtype=complex)
    g = compile_expr(m.g)
    h = compile_expr(m.h)
    with np.errstate(all="ignore"):
        w = g(z) + h(1.0 / z)
        re = w.real
        over = (re > clamp) | np.isnan(re) | np.isnan(w.imag) | np.isinf(w.imag)
        under = (re < -clamp) & ~over
        safe_w = np.where(over | under, 0.0, w)
        powered = ipow(z, m.n)
        values = powered * np.exp(safe_w)
        bad = ~np.isfinite(values)
        over |= bad & ~under
        under |= (values == 0) & ~over
        under |= z == 0
        over &= ~(z == 0)
    status = np.zeros(z.shape, dtype=np.int8)
    status[over] = OVERFLOW
    status[under] = UNDERFLOW
    values = np.where(over, complex(np.inf, 0.0), values)
    values = np.where(under, 0j, values)
    return values, status


def compute_index(m: MapSpec, radius: float = 1.0, samples: int = 4096) -> int:
    """Winding number of f(|z| = radius) around the origin.

    Tracks arg f along ``samples`` equally spaced points; every increment must be
    below pi/2 in magnitude, otherwise :class:`AliasingError` is raised.
    """
    if radius <= 0:
        raise MapError("radius must be positive")
    if samples < 256:
        raise MapError("samples must be >= 256")
    theta = 2 * np.pi * np.arange(samples) / samples
    values, status = eval_map_array(m, radius * np.exp(1j * theta))
    if np.any(status != OK):
        raise SentinelError("sentinel value on the sampling circle")
    ratios = np.roll(values, -1) / values
    increments = np.angle(ratios)
    if np.max(np.abs(increments)) >= np.pi / 2:
        raise AliasingError(f"argument increment {np.max(np.abs(increments)):.3f} >= pi/2; raise samples")
    return int(round(float(np.sum(increments)) / (2 * np.pi)))


@dataclass(frozen=True)
class LiftSpec:
    """Entire lift of a C* self-map: exp(expr(z)) = f(exp(z))."""

    source: MapSpec
    expr: ExprNode

    def __call__(self, z):
        return eval_expr(self.expr, z)


def _is_zero(node: ExprNode) -> bool:
    return node.kind == "const" and node.value == 0


def build_lift(m: MapSpec) -> LiftSpec:
    """Lift with the 2*pi*i*k ambiguity fixed to k = 0."""
    exp_z = unary("exp", VAR)
    exp_minus_z = unary("exp", unary("neg", VAR))
    terms = []
    if m.n == 1:
        terms.append(VAR)
    elif m.n != 0:
        terms.append(binary("mul", const(m.n) if m.n > 0 else unary("neg", const(-m.n)), VAR))
    if not _is_zero(m.g):
        terms.append(m.g.substitute(exp_z))
    if not _is_zero(m.h):
        terms.append(m.h.substitute(exp_minus_z))
    if not terms:
        return LiftSpec(m, const(0))
    expr = terms[0]
    for t in terms[1:]:
        expr = binary("add", expr, t)
    return LiftSpec(m, expr)


@dataclass(frozen=True)
class LiftReport:
    max_residual: float
    passed: bool
    samples: int
    skipped: int
    tol: float

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "pass": self.passed,
            "samples": self.samples,
            "skipped": self.skipped,
            "tol": self.tol,
        }


def verify_lift(
    lift: LiftSpec,
    box: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0),
    samples: int = 1000,
    tol: float = 1e-9,
    seed: int = 0,
) -> LiftReport:
    """Check exp(ft(z)) = f(e**z) at random points of ``box = (x0, x1, y0, y1)``.

    The residual is |exp(ft(z)) - f(e**z)| / (1 + |f(e**z)|). Points where either
    side hits a sentinel are skipped and counted.
    """
    if samples < 100:
        raise MapError("samples must be >= 100")
    x0, x1, y0, y1 = box
    rng = np.random.default_rng(seed)
    z = rng.uniform(x0, x1, samples) + 1j * rng.uniform(y0, y1, samples)
    rhs, status = eval_map_array(lift.source, np.exp(z))
    lifted = compile_expr(lift.expr)(z)
    with np.errstate(all="ignore"):
        lhs = np.exp(lifted)
        ok = (status == OK) & np.isfinite(lhs) & np.isfinite(lifted)
        residual = np.abs(lhs - rhs) / (1.0 + np.abs(rhs))
    skipped = int(np.count_nonzero(~ok))
    worst = float(np.max(residual[ok])) if np.any(ok) else math.inf
    return LiftReport(worst, bool(worst <= tol), samples, skipped, tol)
