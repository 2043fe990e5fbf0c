import numpy as np
import pytest

from wemig.core import Axis, Grid2D
from wemig.dsr import AcquisitionGeometry, MuteConfig, born_model
from wemig.synthetics import SceneSpec, build_scene

TWO_PI = 2 * np.pi

# smooth band with a wide dip taper: clean wavelets for kinematics and gathers
STANDARD_MUTE = MuteConfig(TWO_PI * 3, TWO_PI * 24, TWO_PI * 9, 4e-4, 0.5)


def small_setup(seed=0, nx=33, nz=21, nt=128, dx=20.0):
    """Random heterogeneous model and matching geometry for adjoint tests."""
    rng = np.random.default_rng(seed)
    x0 = -dx * (nx // 2)
    ax = Axis(nx, dx, x0, "x")
    az = Axis(nz, dx, 0.0, "z")
    model = Grid2D((ax, az), 2000 + 300 * rng.random((nx, nz)))
    geo = AcquisitionGeometry(Axis(nx, dx, x0, "s"), Axis(nx, dx, x0, "r"), Axis(nt, 0.004, 0.0, "t"),
                              (nz - 1) * dx, dx)
    mute = MuteConfig(TWO_PI * 4, TWO_PI * 22, TWO_PI * 3, 3e-4, 0.15, time_mute=(0.05, 0.0, None, 0.0))
    return model, geo, mute, rng


@pytest.fixture(scope="session")
def point_scene():
    """Default point scatterer at (0, 1000) in 2000 m/s with its Born data."""
    model, dc, geo = build_scene(SceneSpec())
    data = born_model(model, dc, geo, STANDARD_MUTE)
    return model, dc, geo, STANDARD_MUTE, data


_RESULTS = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _RESULTS


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    grouped = {}
    for name, ok, detail in _RESULTS:
        grouped.setdefault(name, []).append((ok, detail))
    for name, parts in sorted(grouped.items()):
        ok = all(o for o, _ in parts)
        detail = "; ".join(f"{d}{'' if o else ' (FAIL)'}" for o, d in parts)
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
