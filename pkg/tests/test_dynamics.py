import io
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from cstardyn.dynamics import (
    INF,
    ZERO,
    AperiodicItineraryError,
    Itinerary,
    NotEscapingError,
    OrbitBudget,
    Verdict,
    classify_points,
    essential_itinerary,
    itineraries_equivalent,
    itinerary_of_word,
    iterate,
    write_orbit_csv,
)
from cstardyn.mapmodel import MapSpec, ZeroInputError
from cstardyn.presets import get_preset, hyperbolic_map, wandering_map

IDENTITY = MapSpec.parse(1, "0", "0")
SQUARE_INVERSE = MapSpec.parse(-2, "0", "0")  # |z| -> |z|^-2 alternates across the unit circle
CONTRACTION = MapSpec.parse(2, "-log(8)", "0")  # z^2 / 8 sends 2 to 0.5 and then to 0
EX32 = get_preset("ex3_2")

seeds = st.builds(complex, st.floats(-5, 15), st.floats(-10, 10)).filter(lambda z: abs(z) > 1e-3)


def shift(it: Itinerary) -> Itinerary:
    if it.preperiod:
        return Itinerary(it.preperiod[1:], it.period)
    return Itinerary("", it.period[1:] + it.period[:1])


# -- examples ---------------------------------------------------------------------

def test_hyperbolic_orbit_escapes_to_infinity():
    rec = iterate(hyperbolic_map(2.0), 2, OrbitBudget(max_iter=100))
    assert rec.verdict is Verdict.ESCAPING
    assert set(rec.symbols) == {INF}
    assert essential_itinerary(rec) == Itinerary("", INF)


def test_identity_is_bounded_at_step_one():
    rec = iterate(IDENTITY, 5, OrbitBudget(max_iter=100))
    assert rec.verdict is Verdict.BOUNDED_SUSPECT
    assert rec.first_passage == 1
    assert rec.points == (5, 5)


def test_wandering_orbit_drifts_by_two_pi():
    rec = iterate(wandering_map(), math.pi, OrbitBudget(max_iter=5000, r_inf=1e4))
    assert rec.verdict is Verdict.ESCAPING
    re = np.array([p.real for p in rec.points])
    steps = np.diff(re)
    assert np.all(steps > 0)
    assert abs(np.mean(steps[-100:]) - 2 * math.pi) < 0.01 * 2 * math.pi
    assert abs(np.mean(steps) - 2 * math.pi) < 0.05 * 2 * math.pi


def test_alternating_orbit_period():
    rec = iterate(SQUARE_INVERSE, 2)
    assert rec.verdict is Verdict.ESCAPING
    assert rec.symbols.startswith(INF + ZERO + INF + ZERO)
    assert essential_itinerary(rec) == Itinerary("", INF + ZERO)


def test_one_then_zeros():
    rec = iterate(CONTRACTION, 2)
    assert rec.verdict is Verdict.ESCAPING
    assert essential_itinerary(rec) == Itinerary(INF, ZERO)
    assert itinerary_of_word(INF + ZERO * 10) == Itinerary(INF, ZERO)


def test_zero_seed_rejected():
    with pytest.raises(ZeroInputError):
        iterate(IDENTITY, 0)
    with pytest.raises(ZeroInputError):
        classify_points(IDENTITY, np.array([1, 0]), OrbitBudget())


def test_itinerary_requires_escape():
    with pytest.raises(NotEscapingError):
        essential_itinerary(iterate(IDENTITY, 5))


def test_equivalence_examples():
    assert itineraries_equivalent(Itinerary("", INF), Itinerary(ZERO, INF))
    assert itineraries_equivalent(Itinerary("", INF + ZERO), Itinerary("", ZERO + INF))
    assert not itineraries_equivalent(Itinerary("", INF), Itinerary("", ZERO))
    with pytest.raises(AperiodicItineraryError):
        itineraries_equivalent(Itinerary(INF, ""), Itinerary("", INF))


def test_itinerary_validation():
    with pytest.raises(ValueError):
        Itinerary("", INF + INF)
    with pytest.raises(ValueError):
        Itinerary("x", INF)
    assert Itinerary.parse("i0", "0i") == Itinerary(INF + ZERO, ZERO + INF)
    assert Itinerary.parse("i", "0").to_dict() == {"preperiod": "i", "period": "0"}


def test_period_cap():
    word = (INF * 5 + ZERO) * 20
    assert itinerary_of_word(word).period == INF * 5 + ZERO
    assert itinerary_of_word(word, period_cap=4).period == ""


def test_budget_validation():
    for bad in (dict(max_iter=0), dict(r_inf=0.5), dict(r_zero=2.0), dict(r_zero=0.0), dict(confirm_steps=0)):
        with pytest.raises(ValueError):
            OrbitBudget(**bad)
    assert OrbitBudget.from_dict(OrbitBudget(max_iter=7).to_dict()) == OrbitBudget(max_iter=7)
    with pytest.raises(ValueError):
        OrbitBudget.from_dict({"max_iter": 3, "bogus": 1})


def test_undecided_at_budget():
    rec = iterate(wandering_map(), math.pi, OrbitBudget(max_iter=20, r_inf=1e12))
    assert rec.verdict is Verdict.UNDECIDED
    assert len(rec.points) == 20
    assert rec.first_passage == 19


def test_sentinel_is_escape():
    rec = iterate(MapSpec.parse(1, "z", "0"), 10.0)
    assert rec.verdict is Verdict.ESCAPING
    assert rec.sentinel is not None
    assert rec.points[-1] == complex(math.inf, 0)


def test_csv_dump():
    rec = iterate(SQUARE_INVERSE, 2)
    buf = io.StringIO()
    write_orbit_csv(rec, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,re,im,abs,symbol"
    assert len(lines) == len(rec.points) + 1
    k, re, im, mod, sym = lines[2].split(",")
    assert (k, float(re), float(im), sym) == ("1", 0.25, 0.0, "0")


# -- properties -----------------------------------------------------------------------

@given(seeds)
def test_symbol_soundness_and_length(z0):
    budget = EX32.budget
    rec = iterate(EX32.map, z0, budget)
    assert len(rec.points) <= budget.max_iter
    assert len(rec.points) == len(rec.symbols) == rec.first_passage + 1
    for p, s in zip(rec.points, rec.symbols):
        assert s == (ZERO if abs(p) <= 1 else INF)


@given(seeds)
def test_shift_property(z0):
    rec0 = iterate(EX32.map, z0, EX32.budget)
    assume(rec0.verdict is Verdict.ESCAPING and len(rec0.points) > 2)
    rec1 = iterate(EX32.map, rec0.points[1], EX32.budget)
    assert rec1.verdict is Verdict.ESCAPING
    overlap = min(len(rec1.symbols), len(rec0.symbols) - 1)
    assert rec1.symbols[:overlap] == rec0.symbols[1 : 1 + overlap]
    it0, it1 = essential_itinerary(rec0), essential_itinerary(rec1)
    if it0.periodic and it1.periodic:
        assert itineraries_equivalent(it0, it1)
        assert it1 == shift(it0)


@given(seeds, st.sampled_from([4, 8, 16, 50]))
def test_verdict_monotonicity(z0, max_iter):
    short = iterate(EX32.map, z0, OrbitBudget(max_iter=max_iter))
    assume(short.verdict is Verdict.ESCAPING)
    long = iterate(EX32.map, z0, OrbitBudget(max_iter=2 * max_iter))
    assert long.verdict is Verdict.ESCAPING
    assert long.first_passage == short.first_passage
    assert long.points == short.points


def test_growth_beyond_ten():
    rec = iterate(hyperbolic_map(2.0), 2, OrbitBudget(max_iter=100, r_inf=1e12))
    pts = [abs(p) for p in rec.points if math.isfinite(abs(p))]
    pairs = [(a, b) for a, b in zip(pts, pts[1:]) if a > 10]
    assert pairs
    assert all(b >= 1.9 * a for a, b in pairs)


@given(st.lists(seeds, min_size=1, max_size=12))
def test_classify_points_matches_iterate(zs):
    budget = OrbitBudget(max_iter=60)
    classes = classify_points(EX32.map, np.array(zs), budget, prefix_len=8)
    codes = {Verdict.UNDECIDED: 0, Verdict.ESCAPING: 1, Verdict.BOUNDED_SUSPECT: 2}
    for i, z in enumerate(zs):
        rec = iterate(EX32.map, z, budget)
        assert classes.verdict[i] == codes[rec.verdict]
        assert classes.first_passage[i] == rec.first_passage
        bits = sum(1 << k for k, s in enumerate(rec.symbols[:8]) if s == INF)
        assert int(classes.prefix[i]) == bits
        last = rec.symbols[-32:]
        assert int(classes.tail[i]) == int("".join("1" if s == INF else "0" for s in last), 2)


@given(st.text(alphabet=[INF, ZERO], min_size=1, max_size=6), st.text(alphabet=[INF, ZERO], min_size=1, max_size=5))
def test_itinerary_detection_recovers_eventually_periodic_words(pre, per):
    from cstardyn.dynamics import primitive_root

    per = primitive_root(per)
    word = pre + per * 20
    it = itinerary_of_word(word)
    assert it.period and itineraries_equivalent(it, Itinerary("", per))
    # the detected decomposition reproduces the word
    rebuilt = it.preperiod + it.period * (len(word) // len(it.period) + 1)
    assert rebuilt[: len(word)] == word
    assert len(it.preperiod) <= len(pre)
