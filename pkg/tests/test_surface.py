import numpy as np
import pytest

from landmatch.config import Config
from landmatch.errors import RowMaskedError, SurfaceTooShortError, XOutOfRangeError
from landmatch.pipeline import stability_pipeline, stable_region
from landmatch.surface import crosscut, find_stable_region, sd_of_signature, snap_row
from landmatch.synth import Damage, LatentLand, ShotConfig, land_surface, make_barrel
from landmatch.x3p_io import Surface

import oracles


def grid(nx, ny, inc_x=1.5625, inc_y=1.0, fill=0.0):
    return Surface.from_array(np.full((nx, ny), fill), inc_x, inc_y)


def test_constant_surface_crosscut():
    p = crosscut(grid(5, 8, fill=3.25), 2.0)
    assert np.all(p.values == 3.25) and p.values.size == 8


def test_snap_243_75_on_fine_grid():
    s = grid(300, 4)
    assert snap_row(s, 243.75) == round(243.75 / 1.5625) == 156


def test_nearest_row_and_ties():
    s = grid(20, 4, inc_x=1.0)
    assert snap_row(s, 10.3) == 10
    assert snap_row(s, 10.7) == 11
    assert snap_row(s, 10.5) == 10  # exact half goes down
    assert crosscut(s, 10.3).x_height == 10.0


def test_out_of_range_height():
    s = grid(20, 4, inc_x=1.0)
    with pytest.raises(XOutOfRangeError):
        crosscut(s, 19.5)
    with pytest.raises(XOutOfRangeError):
        crosscut(s, -1.0)


def test_masked_cells_interpolated_and_trimmed():
    h = np.array([[np.nan, 1.0, np.nan, 3.0, np.nan], [0, 0, 0, 0, 0]])
    p = crosscut(Surface.from_array(h, 1.0, 1.0), 0.0)
    assert p.ys.tolist() == [1.0, 2.0, 3.0]
    assert p.values.tolist() == [1.0, 2.0, 3.0]


def test_fully_masked_row():
    h = np.array([[np.nan, np.nan], [0.0, 0.0]])
    with pytest.raises(RowMaskedError):
        crosscut(Surface.from_array(h, 1.0, 1.0), 0.0)


@pytest.fixture(scope="module")
def land():
    b = make_barrel("surface-test", seed=5)
    surf, truth = land_surface(b.lands[2], b, ShotConfig(seed=3), np.random.default_rng(3))
    return b, surf


def test_identical_rows_stable_at_start(land):
    _, surf = land
    row = surf.heights[10]
    tiled = Surface.from_array(np.tile(row, (surf.meta.size_x, 1)), surf.meta.increment_x,
                               surf.meta.increment_y)
    rep = stable_region(tiled)
    assert rep.chosen_x == 0.0
    assert rep.ccf_trace[0][1] == pytest.approx(1.0, abs=1e-12)


def test_break_off_below_175(land):
    b, _ = land
    cfg = ShotConfig(seed=4, damage=Damage(x_hi=175.0, fade=25.0))
    surf, _ = land_surface(b.lands[0], b, cfg, np.random.default_rng(4))
    rep = stable_region(surf)
    assert rep.chosen_x is not None and rep.chosen_x >= 175.0

    # direct scan with the brute-force alignment oracle
    run = stability_pipeline(Config())
    for x, ccf in rep.ccf_trace:
        a, c = run(crosscut(surf, x)), run(crosscut(surf, x + 25.0))
        _, r, _, _ = oracles.align(a.residuals, c.residuals, 120, 0.5)
        assert ccf == pytest.approx(r, abs=1e-9)


def test_noise_surface_flagged(land):
    b, _ = land
    empty = LatentLand(np.array([]), np.array([]), np.array([]))
    surf, _ = land_surface(empty, b, ShotConfig(noise_sd=1.0), np.random.default_rng(9))
    rep = stable_region(surf)
    assert rep.flagged
    assert all(np.isnan(c) or c < 0.95 for _, c in rep.ccf_trace)


def test_failing_pipeline_gives_nan_and_flag(land):
    _, surf = land

    def broken(profile):
        from landmatch.errors import NoPeakFoundError
        raise NoPeakFoundError("nope")

    rep = find_stable_region(surf, broken)
    assert rep.flagged and all(np.isnan(c) for _, c in rep.ccf_trace)


def test_too_short_for_scan():
    with pytest.raises(SurfaceTooShortError):
        find_stable_region(grid(3, 10, inc_x=6.25), lambda p: p)


def test_signature_sd_decreases_with_height(land):
    _, surf = land
    run = stability_pipeline(Config())
    low = sd_of_signature(surf, 0.0, run)
    high = sd_of_signature(surf, 300.0, run)
    assert high < low
