import numpy as np
import pytest

from wemig.config import ConfigError, defaults, parse_config, parse_text, scan_values


def test_empty_file_gives_defaults():
    cfg = parse_text("")
    assert cfg.values == defaults()
    assert cfg.scene().nx == 97
    assert cfg.mute().omega_max == pytest.approx(2 * np.pi * 24)
    assert cfg.geometry().nz == 71


def test_round_trip_through_ini():
    text = "[scene]\nmodel_kind = lens\npoints = 0 900 1; 100 800 0.5\n[mute]\ntime_mute = 0.1 0 1.8 0\n"
    # the default radius is large for the lens, which validation flags
    with pytest.warns(UserWarning, match="offset radius"):
        cfg = parse_text(text)
        again = parse_text(cfg.to_ini())
    assert again.values == cfg.values
    assert again.scene().points == ((0.0, 900.0, 1.0), (100.0, 800.0, 0.5))


def test_inline_comments_and_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[acquisition]\nnt = 400  # shorter record\n[run]\nseed = 7\n")
    cfg = parse_config(p)
    assert cfg["acquisition"]["nt"] == 400 and cfg["run"]["seed"] == 7


@pytest.mark.parametrize("text, where", [
    ("[nosuch]\n", "[nosuch]"),
    ("[scene]\nfoo = 1\n", "foo"),
    ("[scene]\nnx = ten\n", "nx"),
    ("[scene]\nnx = 5\nnx = 6\n", "nx"),
    ("[scene]\n[scene]\n", "scene"),
    ("[acquisition]\nz_max = 1010\n", "z_max"),
    ("[acquisition]\nz_max = 5000\n", "z_max"),
    ("[mute]\nf_max = 200\n", "f_max"),
    ("[mute]\nslowness_cut = 6e-4\n", "slowness_cut"),
    ("[propagator]\nq_lo = 1.2\n", "q_lo"),
    ("[angle]\npmax = 3e-4\n", "aperture guard"),
    ("[angle]\nx_positions = 0 5000\n", "x_positions"),
    ("[recon]\nmute_power = 3\n", "mute_power"),
    ("[recon]\nphi_mode = sideways\n", "phi_mode"),
    ("[annihilator]\nscan_step = 0\n", "scan"),
    ("[run]\nthreads = 0\n", "threads"),
    ("[scene]\npoints = 0 50 1\n", "points"),
])
def test_errors_name_the_key(text, where):
    with pytest.raises(ConfigError) as err:
        parse_text(text)
    assert where in str(err.value)


def test_replace_revalidates():
    cfg = parse_text("")
    assert cfg.replace("angle", radius=200.0).angle().chi_radius == 200.0
    with pytest.raises(ConfigError):
        cfg.replace("angle", pmin=-4e-4)


def test_scan_values_examples():
    s = scan_values(0.9, 1.1, 0.01)
    assert s.size == 21 and s[0] == 0.9 and s[10] == 1.0 and s[-1] == 1.1
    assert np.array_equal(scan_values(1.0, 1.0, 0.1), [1.0])
    with pytest.raises(ConfigError):
        scan_values(1.1, 0.9, 0.01)
