import numpy as np
import pytest

from wemig.angle import AngleGather, p_axis
from wemig.annihilator import (SunkField, annihilate, annihilation_report, apply_offset_mult, dp_annihilate,
                               dp_ratio, ktilde_star, semblance_scan)
from wemig.core import Axis
from wemig.dsr import DsrEngine
from wemig.recon import reconstruct

from conftest import small_setup


def _field(vals, d=10.0):
    n = vals.shape[0]
    return SunkField((Axis(n, d, 0.0, "s"), Axis(n, d, 0.0, "r"), Axis(vals.shape[2], d, 0.0, "z")), vals)


def test_offset_multiplier_examples():
    f = _field(np.ones((3, 3, 2)))
    out = apply_offset_mult(f).values[:, :, 0]
    assert np.array_equal(out, np.array([[0, 10, 20], [-10, 0, 10], [-20, -10, 0]], dtype=float))
    norm = apply_offset_mult(f, normalize=True).values[:, :, 1]
    assert np.abs(norm).max() == 1.0
    assert np.array_equal(np.diagonal(norm), np.zeros(3))


def test_offset_multiplier_kills_the_diagonal():
    rng = np.random.default_rng(0)
    f = _field(np.einsum("ij,k->ijk", np.eye(5), rng.standard_normal(4)))
    assert not np.any(apply_offset_mult(f).values)


def _gather(values, p):
    n = values.shape[0]
    return AngleGather((Axis(n, 10.0, 0.0, "x"), Axis(values.shape[1], 10.0, 0.0, "z"), p), values)


def test_dp_examples():
    p = p_axis(-2e-4, 2e-4, 5)
    flat = _gather(np.ones((2, 3, 5)), p)
    assert not np.any(dp_annihilate(flat).values)
    lin = _gather(np.broadcast_to(p.values, (2, 3, 5)).copy(), p)
    assert np.allclose(dp_annihilate(lin).values, 1.0)
    with pytest.raises(ValueError):
        dp_annihilate(_gather(np.ones((1, 1, 2)), p_axis(0, 1e-4, 2)))
    assert dp_ratio(flat) == 0.0
    with pytest.raises(ValueError):
        dp_ratio(_gather(np.zeros((2, 3, 5)), p))


def test_dp_ratio_windows():
    p = p_axis(-2e-4, 2e-4, 9)
    v = np.zeros((4, 2, 9))
    v[0] = np.sin(p.values / 1e-4)
    v[1:] = 1.0
    g = _gather(v, p)
    assert dp_ratio(g, x_window=(10.0, 30.0)) == 0.0
    assert dp_ratio(g, x_window=(0.0, 0.0)) > 0
    assert dp_ratio(g, x_window=(0.0, 0.0), p_limit=1e-4) > 0


def test_ktilde_diagonal_is_the_reconstruction():
    model, geo, mute, rng = small_setup()
    d = geo.empty_data().with_values(rng.standard_normal((geo.s.n, geo.r.n, geo.t.n)))
    e = DsrEngine(model, geo, mute)
    kt = ktilde_star(d, model, geo, mute, engine=e)
    img = reconstruct(d, model, geo, mute, engine=e).values
    assert np.allclose(kt.diagonal(), img, rtol=0, atol=1e-10 * np.abs(img).max())


def test_zero_data_zero_residual():
    model, geo, mute, _ = small_setup()
    assert not np.any(annihilate(geo.empty_data(), model, geo, mute).values)
    rep = annihilation_report(geo.empty_data(), model, geo, mute)
    assert rep.ratio == 0.0


def test_scan_is_scale_invariant_in_the_data():
    model, geo, mute, rng = small_setup()
    d = geo.empty_data().with_values(rng.standard_normal((geo.s.n, geo.r.n, geo.t.n)))
    a = semblance_scan(d, geo, mute, model=model, scales=[1.0])
    b = semblance_scan(d.with_values(7.5 * d.values), geo, mute, model=model, scales=[1.0])
    assert b.j[0] == pytest.approx(a.j[0], rel=1e-12)


def test_scan_rejects_bad_inputs():
    model, geo, mute, rng = small_setup()
    with pytest.raises(ValueError):
        semblance_scan(geo.empty_data(), geo, mute, model=model)
    d = geo.empty_data().with_values(rng.standard_normal((geo.s.n, geo.r.n, geo.t.n)))
    with pytest.raises(ValueError):
        semblance_scan(d, geo, mute, model=model, scales=[0.0])
    with pytest.raises(ValueError):
        semblance_scan(d, geo, mute)
