import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spnn_fpv.errors import OutOfRangeError
from spnn_fpv.varmap import (
    MapSampler, VariationMap, VariationParams, autocorrelation_x, correlation_length, extract_die,
    generate_map, generate_wafer_map, load_map, sample_region, save_map,
)


def const_map(w, t=0.0, shape=(4, 6), d=10.0, origin=(0.0, 0.0)):
    return VariationMap(np.full(shape, w, float), np.full(shape, t, float), origin, d, VariationParams())


def test_params_validation():
    with pytest.raises(ValueError):
        VariationParams(sigma_w=-1)
    with pytest.raises(ValueError):
        VariationParams(corr_length=0)
    with pytest.raises(ValueError):
        VariationParams(mesh_size=0)


def test_map_rejects_mismatched_or_nonfinite_grids():
    with pytest.raises(ValueError):
        VariationMap(np.zeros((2, 3)), np.zeros((3, 2)), (0, 0), 10, VariationParams())
    bad = np.zeros((2, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        VariationMap(bad, np.zeros((2, 2)), (0, 0), 10, VariationParams())


def test_wafer_map_sigma_and_determinism():
    p = VariationParams(sigma_w=5, sigma_t=2, corr_length=1000, seed=3)
    a = generate_wafer_map(p, 20000)
    b = generate_wafer_map(p, 20000)
    assert a == b
    assert 4.5 <= a.width_dev.std() <= 5.5
    assert 1.8 <= a.thick_dev.std() <= 2.2


def test_zero_sigma_gives_zero_grids():
    m = generate_map(VariationParams(sigma_w=0, sigma_t=0), 500, 300)
    assert not m.width_dev.any() and not m.thick_dev.any()


def test_wafer_diameter_must_span_ten_cells():
    with pytest.raises(ValueError):
        generate_wafer_map(VariationParams(), 90)


@pytest.mark.parametrize("l", [100.0, 1000.0])
def test_correlation_length_fidelity(l):
    fits = []
    for seed in range(10):
        m = generate_map(VariationParams(corr_length=l, seed=seed), 20 * l, 8 * l)
        fits.append(correlation_length(m.width_dev, m.mesh_size))
    assert abs(np.mean(fits) - l) / l < 0.2


def test_autocorrelation_of_white_noise_drops_immediately():
    g = np.random.default_rng(0).standard_normal((200, 400))
    acf = autocorrelation_x(g)
    assert acf[0] == pytest.approx(1.0)
    assert abs(acf[1]) < 0.05
    assert correlation_length(g, 10.0) < 10.0


def test_quadrant_stationarity():
    m = generate_map(VariationParams(corr_length=100, seed=4), 4000, 4000)
    g = m.width_dev
    h, w = g.shape[0] // 2, g.shape[1] // 2
    q = [g[:h, :w].std(), g[:h, w:].std(), g[h:, :w].std(), g[h:, w:].std()]
    assert max(q) / min(q) < 1.15


def test_width_and_thickness_are_independent():
    rs = []
    for seed in range(10):
        m = generate_map(VariationParams(corr_length=100, seed=seed), 3000, 3000)
        rs.append(np.corrcoef(m.width_dev.ravel(), m.thick_dev.ravel())[0, 1])
    assert abs(np.mean(rs)) < 0.1


def test_radial_trend_mean():
    p = VariationParams(sigma_w=1, sigma_t=1, corr_length=100, radial_amplitude=4.0, seed=1)
    m = generate_wafer_map(p, 4000)
    xc, yc = m.cell_centers()
    bowl = 4.0 * (xc[None, :] ** 2 + yc[:, None] ** 2) / 2000**2
    resid = m.width_dev - bowl
    # about (4000 / 100)**2 independent patches
    assert abs(resid.mean()) < 3 * 1 / 40
    assert 0.9 < resid.std() < 1.1
    with pytest.raises(ValueError):
        generate_map(p, 100, 100)


def test_extract_die_identity_and_single_cell():
    m = generate_map(VariationParams(seed=2), 200, 100, origin=(-50, 20))
    assert extract_die(m, m.origin, 200, 100) == m
    cell = extract_die(m, (-40, 30), 10, 10)
    assert cell.shape == (1, 1)
    assert cell.width_dev[0, 0] == m.width_dev[1, 1]
    assert cell.mesh_size == m.mesh_size


def test_extract_die_out_of_bounds():
    m = const_map(1.0)
    with pytest.raises(OutOfRangeError):
        extract_die(m, (0, 0), 100, 10)
    with pytest.raises(ValueError):
        extract_die(m, (5, 0), 10, 10)


def test_disjoint_dies_differ_at_short_correlation():
    diffs = []
    for seed in range(20):
        w = generate_map(VariationParams(corr_length=100, seed=seed), 2000, 1000)
        a = extract_die(w, (0, 0), 500, 500)
        b = extract_die(w, (1500, 500), 500, 500)
        diffs.append(abs(a.width_dev.mean() - b.width_dev.mean()))
    assert np.mean(diffs) > 0.05


def test_sample_region_single_cell_and_pair():
    g = np.arange(12, dtype=float).reshape(3, 4)
    m = VariationMap(g, -g, (0, 0), 10, VariationParams())
    assert sample_region(m, (10, 10, 10, 10)) == pytest.approx((5.0, -5.0))
    assert sample_region(m, (10, 10, 20, 10)) == pytest.approx((5.5, -5.5))
    # sub-cell rect inside one cell
    assert sample_region(m, (21, 12, 3, 2)) == pytest.approx((6.0, -6.0))


def brute_force_mean(m, rect):
    x, y, w, h = rect
    d = m.mesh_size
    tot, area = 0.0, 0.0
    for r in range(m.shape[0]):
        for c in range(m.shape[1]):
            cx0, cy0 = m.origin[0] + c * d, m.origin[1] + r * d
            ox = max(0.0, min(x + w, cx0 + d) - max(x, cx0))
            oy = max(0.0, min(y + h, cy0 + d) - max(y, cy0))
            tot += ox * oy * m.width_dev[r, c]
            area += ox * oy
    return tot / area


def test_arm_rect_matches_cell_enumeration():
    m = generate_map(VariationParams(corr_length=100, seed=9), 400, 60, origin=(-7, 3))
    rect = (13.3, 25.25, 135.0, 0.5)
    assert sample_region(m, rect)[0] == pytest.approx(brute_force_mean(m, rect), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    x=st.floats(0, 380), y=st.floats(0, 180),
    w=st.floats(0.01, 200), h=st.floats(0.01, 100),
)
def test_sampler_matches_brute_force(x, y, w, h):
    m = generate_map(VariationParams(corr_length=50, seed=1), 400, 200)
    got = MapSampler(m).sample([(x, y, w, h)])[0, 0]
    # integral-image differences lose a few digits on sub-micron rectangles
    assert got == pytest.approx(brute_force_mean(m, (x, y, w, h)), abs=1e-6)


def test_sample_outside_raises():
    m = const_map(1.0)
    with pytest.raises(OutOfRangeError):
        sample_region(m, (1000, 0, 10, 10))


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-20, 20), x=st.floats(0, 50), y=st.floats(0, 30))
def test_constant_map_samples_constant(c, x, y):
    m = const_map(c, -c)
    assert sample_region(m, (x, y, 5, 5)) == pytest.approx((c, -c), abs=1e-9)


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_save_load_round_trip(tmp_path, suffix):
    m = generate_map(VariationParams(seed=5, radial_amplitude=0), 120, 70, origin=(3, -40))
    path = tmp_path / f"m{suffix}"
    save_map(m, path)
    assert load_map(path) == m


def test_load_rejects_foreign_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_map(p)
