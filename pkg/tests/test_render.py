import io
import math
import os
import time

import numpy as np
import pytest

from cstardyn.dynamics import ESCAPING_CODE, OrbitBudget
from cstardyn.presets import get_preset
from cstardyn.render import CLASS_NAMES, Palette, RenderError, RenderJob, Viewport, pixel_classes, render


def job_for(name, size, tile_size=64, **kw):
    p = get_preset(name)
    return RenderJob(p.map, Viewport(*p.viewport), size, size, p.budget, Palette(), tile_size, **kw)


def png_bytes(result):
    buf = io.BytesIO()
    result.write_png(buf)
    return buf.getvalue()


@pytest.fixture(scope="module")
def hyperbolic_256():
    return render(job_for("ex3_2", 256))


def test_absorbing_half_plane_escapes(hyperbolic_256):
    res = hyperbolic_256
    job = job_for("ex3_2", 256)
    x = job.pixel_points(0, 256, 0, 256).real
    right = x > 10
    good = (res.verdict == ESCAPING_CODE) & res.prefix_word(3)
    assert np.count_nonzero(good & right) >= 0.99 * np.count_nonzero(right)


def test_histogram(hyperbolic_256):
    hist = hyperbolic_256.summary["histogram"]
    assert set(hist) == set(CLASS_NAMES)
    assert sum(hist.values()) == 256 * 256 == hyperbolic_256.summary["pixels"]
    assert hist["escaping_inf"] > hist["escaping_zero"] > 0


def test_deterministic_bytes():
    job = job_for("ex3_2", 96, tile_size=32)
    assert png_bytes(render(job)) == png_bytes(render(job))


def test_tile_order_independence():
    job = job_for("ex3_4", 96, tile_size=32)
    order = list(np.random.default_rng(3).permutation(len(job.tiles())))
    a, b = render(job), render(job, tile_order=order)
    assert png_bytes(a) == png_bytes(b)
    assert np.array_equal(a.first_passage, b.first_passage)
    with pytest.raises(RenderError):
        render(job, tile_order=[0, 0])


def test_tile_size_does_not_matter():
    a = render(job_for("ex3_2", 80, tile_size=16))
    b = render(job_for("ex3_2", 80, tile_size=80))
    assert png_bytes(a) == png_bytes(b)


def test_process_pool_matches_serial():
    job = job_for("ex3_2", 64, tile_size=32)
    assert png_bytes(render(job, workers=2)) == png_bytes(render(job, workers=1))


def test_wandering_domain_pixels():
    job = job_for("ex2_1", 256)
    res = render(job)
    vp = job.viewport
    dx = (vp.x1 - vp.x0) / job.width
    dy = (vp.y1 - vp.y0) / job.height

    def pixel(z):
        return int((vp.y1 - z.imag) / dy), int((z.real - vp.x0) / dx)

    classes = pixel_classes(res.verdict, res.tail, job.budget.confirm_steps)
    for n in (1, 2, 3):
        c = (2 * n + 1) * math.pi
        center = pixel(complex(c, 0))
        assert res.verdict[center] == ESCAPING_CODE
        # slow drift through the wandering domains
        assert res.first_passage[center] > 100
        corners = [pixel(complex(c + sx * 1.5 * math.pi, sy * 3.0)) for sx in (-1, 1) for sy in (-1, 1)]
        corners = [(min(r, job.height - 1), min(k, job.width - 1)) for r, k in corners]
        # corner pixels lie on the boundary of R_n: some leave fast instead of drifting
        fast = [q for q in corners if res.first_passage[q] < res.first_passage[center] / 4]
        assert fast
        assert not all(classes[q] == classes[center] and res.first_passage[q] > 100 for q in corners)


def test_mirror_symmetry(hyperbolic_256):
    rgb = hyperbolic_256.rgb
    differing = np.any(rgb != rgb[::-1], axis=2)
    assert np.count_nonzero(differing) < 0.001 * differing.size


def test_mirror_symmetry_parabolic():
    res = render(job_for("ex3_4", 128))
    differing = np.any(res.rgb != res.rgb[::-1], axis=2)
    assert np.count_nonzero(differing) < 0.001 * differing.size


def test_zero_pixel_is_nudged():
    p = get_preset("ex3_2")
    job = RenderJob(p.map, Viewport(-1.5, 1.5, -1.5, 1.5), 3, 3, OrbitBudget(max_iter=20))
    pts = job.pixel_points(0, 3, 0, 3)
    assert not np.any(pts == 0)
    assert pts[1, 1] == 0.5
    assert render(job).summary["pixels"] == 9


def test_logpolar_view():
    p = get_preset("ex3_2")
    job = RenderJob(p.map, Viewport(-4, 4, -math.pi, math.pi, "logpolar"), 64, 64, OrbitBudget(max_iter=100))
    res = render(job)
    pts = job.pixel_points(0, 64, 0, 64)
    assert np.allclose(np.log(np.abs(pts[0])), -4 + (np.arange(64) + 0.5) * 8 / 64)
    assert res.summary["histogram"]["escaping_inf"] > 0


def test_job_validation(tmp_path):
    p = get_preset("ex3_2")
    with pytest.raises(ValueError):
        OrbitBudget(max_iter=0)
    with pytest.raises(RenderError):
        RenderJob(p.map, Viewport(0, 1, 0, 1), 20000, 20000)
    with pytest.raises(RenderError):
        Viewport(1, 0, 0, 1)
    with pytest.raises(RenderError):
        Viewport(0, 1, 0, 1, "polar")
    res = render(RenderJob(p.map, Viewport(0, 1, 0, 1), 4, 4, OrbitBudget(max_iter=10)))
    with pytest.raises(OSError):
        res.write_png(tmp_path / "missing" / "x.png")


def test_png_and_summary_files(tmp_path):
    job = job_for("ex3_2", 32)
    res = render(job)
    res.write_png(tmp_path / "a.png")
    res.write_summary(tmp_path / "a.json", job)
    from PIL import Image

    with Image.open(tmp_path / "a.png") as im:
        assert im.mode == "RGB" and im.size == (32, 32)
        assert np.array_equal(np.asarray(im), res.rgb)
    assert "elapsed" not in (tmp_path / "a.json").read_text()


@pytest.mark.slow
@pytest.mark.skipif((os.cpu_count() or 1) < 2, reason="scaling needs at least 2 logical cores")
def test_parallel_scaling():
    job = job_for("ex3_2", 1024)
    workers = os.cpu_count()
    timings = {}
    for t in (max(workers // 2, 1), workers):
        start = time.perf_counter()
        render(job, workers=t)
        timings[t] = time.perf_counter() - start
    assert timings[workers] <= 0.7 * timings[max(workers // 2, 1)]
