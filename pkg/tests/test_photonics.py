import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from spnn_fpv import photonics as ph
from spnn_fpv.errors import DomainError


def symmetric_te_slab(n1, n2, d, lam):
    """Fundamental TE index of a symmetric slab from tan(kd/2) = g/k."""
    k0 = 2 * math.pi / lam

    def f(n):
        k = k0 * math.sqrt(n1**2 - n**2)
        g = k0 * math.sqrt(n**2 - n2**2)
        return math.tan(k * d / 2) - g / k

    # the fundamental root sits where k d / 2 < pi / 2
    n_lo = math.sqrt(max(n1**2 - (math.pi / (k0 * d)) ** 2, n2**2)) + 1e-12
    return brentq(f, n_lo, n1 - 1e-12)


def test_slab_solver_matches_symmetric_dispersion():
    got = ph._slab_index(3.476, 1.444, 1.444, 220.0, 1550.0, "TE")
    assert got == pytest.approx(symmetric_te_slab(3.476, 1.444, 220.0, 1550.0), abs=1e-10)


def test_nominal_strip_index(eim):
    n = ph.n_eff(eim, ph.WaveguideSpec())
    assert 2.15 <= n <= 2.45


def test_width_sensitivity_falls_with_width(eim):
    widths = np.arange(350, 1201, 50)
    d_w, d_t = ph.width_sensitivity_table(eim, "strip", widths)
    assert np.all(np.diff(d_w) < 0)
    assert d_w[-1] < 0.1 * d_w[0]
    # thickness sensitivity barely moves and dominates once the guide is wide
    assert np.all(d_t[widths >= 600] > d_w[widths >= 600])
    assert np.ptp(d_t) < 0.2 * d_t.mean()


def test_ridge_less_sensitive_than_strip(eim):
    widths = np.arange(350, 1201, 50)
    sw, st_ = ph.width_sensitivity_table(eim, "strip", widths)
    rw, rt = ph.width_sensitivity_table(eim, "ridge", widths)
    assert np.all(rw < sw)
    assert np.all(rt < st_)


def test_delta_beta_zero_and_linear(eim):
    spec = ph.WaveguideSpec()
    assert ph.delta_beta(eim, spec, 0, 0) == 0
    a = ph.delta_beta(eim, spec, 5, 2)
    assert ph.delta_beta(eim, spec, 10, 4) == pytest.approx(2 * a)
    d_w, d_t = ph.sensitivities(eim, spec)
    assert a == pytest.approx(2 * math.pi / 1.55 * (5 * d_w + 2 * d_t))


def test_fd_step_is_converged(eim):
    spec = ph.WaveguideSpec()
    for which in "wt":
        assert ph.dn_eff(eim, spec, which, 1.0) == pytest.approx(ph.dn_eff(eim, spec, which, 0.5), rel=1e-2)


def test_index_monotone_in_width_and_thickness(eim):
    ws = np.linspace(350, 1200, 20)
    ts = np.linspace(160, 290, 20)
    n = np.array([[eim.evaluate("strip", w, t, 0.0, 1550.0) for t in ts] for w in ws])
    assert np.all(np.diff(n, axis=0) > 0)
    assert np.all(np.diff(n, axis=1) > 0)
    assert ph.n_eff(eim, ph.WaveguideSpec("ridge")) > ph.n_eff(eim, ph.WaveguideSpec("strip"))


def test_delta_kappa_values():
    dc = ph.DcSpec()
    assert ph.delta_kappa(dc, 0.0) == 0.0
    expected = math.sin(math.pi * 10_000 * 1e-3 / 1550) ** 2
    assert ph.delta_kappa(dc, 1e-3) == pytest.approx(expected, rel=1e-12)
    assert ph.delta_kappa(dc, 1e-3) == pytest.approx(4.108e-4, rel=1e-3)
    # half-wave argument saturates the coupler
    assert ph.delta_kappa(dc, 1550 / (2 * 10_000)) == pytest.approx(1.0)


def test_supermode_split_gives_half_coupling_scale(eim):
    # a 10 um, 200 nm gap coupler is far from a full transfer length
    split = eim.supermode_split("strip", 470.0, 220.0, 0.0, 200.0, 1550.0)
    assert 0 < split < 0.1


def test_dc_index_methods(eim):
    dc, spec = ph.DcSpec(), ph.WaveguideSpec()
    assert ph.delta_n_dc(eim, dc, spec, 0, 0) == 0
    assert ph.delta_n_dc(eim, dc, spec, 5, 0, "mean-index") > 0
    mean = ph.delta_n_dc(eim, dc, spec, 5, 2, "mean-index")
    d_w, d_t = ph.sensitivities(eim, spec)
    assert mean == pytest.approx(5 * d_w + 2 * d_t)
    sm = ph.delta_n_dc(eim, dc, spec, 5, 2, "supermode")
    assert abs(sm) < abs(mean)
    # two-point oracle on the splitting: wider guides, narrower gap
    s = eim.supermode_split
    fd = (s("strip", 471.0, 220.0, 0.0, 199.0, 1550.0) - s("strip", 469.0, 220.0, 0.0, 201.0, 1550.0)) / 2
    assert ph.delta_n_dc(eim, dc, spec, 5, 0, "supermode") == pytest.approx(5 * fd, rel=1e-12)
    with pytest.raises(ValueError):
        ph.delta_n_dc(eim, dc, spec, 1, 1, "bogus")


@pytest.mark.parametrize(
    "w, length",
    [(533, 135.63), (589, 136.19), (688, 137.18), (853, 138.83), (1111, 141.41), (1200, 142.3), (470, 135.0)],
)
def test_taper_rule(w, length):
    assert ph.arm_length(w) == pytest.approx(length, abs=1e-9)


def test_taper_symmetric():
    assert ph.taper_length(500, 853) == ph.taper_length(853, 500)


def test_taper_rejects_out_of_range():
    with pytest.raises(ValueError):
        ph.taper_length(470, 1300)


def test_spec_validation():
    with pytest.raises(ValueError):
        ph.WaveguideSpec(width=300)
    with pytest.raises(ValueError):
        ph.WaveguideSpec(geometry="rib")
    with pytest.raises(ValueError):
        ph.WaveguideSpec("strip", slab_height=50)
    assert ph.WaveguideSpec("ridge").slab_height == ph.RIDGE_SLAB_HEIGHT


def test_model_domain_errors(eim):
    with pytest.raises(DomainError):
        eim.evaluate("strip", 470.0, 400.0, 0.0, 1550.0)
    with pytest.raises(DomainError):
        eim.evaluate("strip", 470.0, 220.0, 0.0, 900.0)


def test_table_model_round_trips(eim, tmp_path):
    tab = ph.tabulate(eim, np.arange(400, 601, 10), np.arange(210, 231, 5))
    spec = ph.WaveguideSpec(width=470, thickness=220)
    assert ph.n_eff(tab, spec) == pytest.approx(ph.n_eff(eim, spec), abs=5e-4)
    for text in (tab.to_json(), tab.to_csv()):
        back = ph.TableModel.from_json(text) if text.startswith("{") else ph.TableModel.from_csv(text)
        assert back.evaluate("ridge", 515.0, 217.0, 150.0, 1550.0) == pytest.approx(
            tab.evaluate("ridge", 515.0, 217.0, 150.0, 1550.0), abs=1e-12)
    p = tmp_path / "t.json"
    p.write_text(tab.to_json())
    assert json.loads(p.read_text())["format"] == "spnn-fpv/neff-table"
    assert ph.TableModel.load(p).evaluate("strip", 470.0, 220.0, 0.0, 1550.0) == pytest.approx(
        tab.evaluate("strip", 470.0, 220.0, 0.0, 1550.0))
    with pytest.raises(DomainError):
        tab.evaluate("strip", 700.0, 220.0, 0.0, 1550.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(360, 1190), st.floats(-10, 10), st.floats(-5, 5))
def test_delta_beta_sign_follows_deviation(w, rw, rt):
    eim = ph.EimModel()
    spec = ph.WaveguideSpec(width=w)
    db = ph.delta_beta(eim, spec, rw, rt)
    d_w, d_t = ph.sensitivities(eim, spec)
    assert d_w > 0 and d_t > 0
    if rw >= 0 and rt >= 0:
        assert db >= 0
    if rw <= 0 and rt <= 0:
        assert db <= 0
