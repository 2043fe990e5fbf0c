import numpy as np
import pytest

from wemig.synthetics import SceneError, SceneSpec, background, build_scene, geometry_for, perturbation


def test_constant_and_gradient_backgrounds():
    c = background(SceneSpec())
    assert np.all(c.values == 2000.0)
    g = background(SceneSpec(model_kind="gradient", a=1500.0, b=0.5))
    z = g.axes[1].values
    assert np.allclose(g.values[10], 1500.0 + 0.5 * z)


def test_lens_minimum_at_centre():
    m = background(SceneSpec(model_kind="lens"))
    i, k = np.unravel_index(np.argmin(m.values), m.shape)
    assert m.axes[0].values[i] == 0.0 and m.axes[1].values[k] == 500.0
    assert m.values.min() == pytest.approx(1800.0)


def test_point_scatterer_on_grid_and_between_nodes():
    dc = perturbation(SceneSpec())
    assert dc.values.sum() == pytest.approx(1.0)
    i, k = np.unravel_index(np.argmax(dc.values), dc.shape)
    assert (dc.axes[0].values[i], dc.axes[1].values[k]) == (0.0, 1000.0)
    off = perturbation(SceneSpec(points=((10.0, 1005.0, 2.0),)))
    assert off.values.sum() == pytest.approx(2.0)
    assert np.count_nonzero(off.values) == 4


def test_reflector_profile_and_lateral_taper():
    spec = SceneSpec(points=(), reflector=(1000.0, 0.0, 100.0))
    dc = perturbation(spec)
    col = dc.values[48]
    k = int(1000.0 / spec.dz)
    assert np.allclose(col[k - 3 : k + 4], [0, 25, 75, 100, 75, 25, 0], atol=1e-12)
    row = dc.values[:, k]
    assert row[0] == 0 and row[-1] == 0
    assert np.all(row[5:-5] == 100.0)


def test_scene_rejects_bad_specs():
    with pytest.raises(SceneError):
        SceneSpec(model_kind="salt")
    with pytest.raises(SceneError):
        perturbation(SceneSpec(points=((0.0, 50.0, 1.0),)))
    with pytest.raises(SceneError):
        perturbation(SceneSpec(points=((5000.0, 500.0, 1.0),)))
    with pytest.raises(SceneError):
        background(SceneSpec(model_kind="lens", lens=(0.0, 500.0, 100.0, -1.5)))


def test_build_scene_is_deterministic():
    a = build_scene(SceneSpec(reflector=(800.0, 40.0, 50.0)))
    b = build_scene(SceneSpec(reflector=(800.0, 40.0, 50.0)))
    assert np.array_equal(a[0].values, b[0].values) and np.array_equal(a[1].values, b[1].values)
    assert a[2] == b[2]


def test_geometry_matches_model_axes():
    spec = SceneSpec()
    geo = geometry_for(spec, z_max=1200.0)
    assert geo.s.n == spec.nx and geo.s.origin == spec.x0
    assert geo.nz == 61 and geo.t.n == spec.nt
