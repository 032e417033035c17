# Copyright Contributors to the emsplat Project
# SPDX-License-Identifier: Apache-2.0
#
import math

import numpy as np
import pytest

import emsplat


def isotropic_at_origin(sigma, amplitude):
    p = np.zeros((1, 11))
    p[0, 3:6] = emsplat.inverse_activate(sigma)
    p[0, 6] = 1.0
    p[0, 10] = emsplat.inverse_activate(amplitude)
    return emsplat.GaussianMixture(p)


def test_render_peak_and_mass():
    grid = emsplat.GridSpec(64)
    img = emsplat.render(isotropic_at_origin(0.02, 1.0), [1, 0, 0, 0], grid)
    assert img.shape == (64, 64)
    assert img.argmax() == 32 * 64 + 32
    assert img[32, 32] == pytest.approx(1.0 / (2 * math.pi * 0.02**2), rel=1e-12)
    assert img.sum() * grid.pixel_width**2 == pytest.approx(1.0, rel=1e-6)


def test_mixture_array_round_trip_and_param_count():
    grid = emsplat.GridSpec(32)
    m = emsplat.GaussianMixture.init_random(25, 3, grid)
    assert len(m) == 25
    assert emsplat.param_count(m) == 275
    assert emsplat.GaussianMixture(m.to_array()) == m
    with pytest.raises(ValueError):
        emsplat.GaussianMixture(np.zeros((3, 10)))


def test_fsc_of_identical_volumes_is_one(tmp_path):
    grid = emsplat.GridSpec(32, pixel_size=2.0)
    vol = emsplat.voxelize(emsplat.make_phantom("helix", 50, 1), grid)
    curve = emsplat.fsc(vol, vol, 2.0)
    assert np.all(curve["correlation"] == 1.0)
    assert curve["resolution_0.143"] is None

    path = tmp_path / "v.mrc"
    emsplat.write_volume(path, vol, 2.0)
    back, apix = emsplat.read_volume(path)
    np.testing.assert_array_equal(back, vol.astype(np.float32).astype(np.float64))
    assert apix == pytest.approx(2.0)


def test_ctf_at_zero_frequency():
    ctf = emsplat.CtfParams()
    ctf.amplitude_contrast = 0.07
    h = emsplat.ctf_evaluate(ctf, emsplat.GridSpec(16, pixel_size=2.0))
    assert h[8, 8] == pytest.approx(-0.07)
    out = emsplat.apply_ctf(np.ones((16, 16)), ctf, emsplat.GridSpec(16, pixel_size=2.0))
    np.testing.assert_allclose(out, -0.07, atol=1e-12)


def test_simulate_and_train_small(tmp_path):
    grid = emsplat.GridSpec(24, pixel_size=3.0)
    data = emsplat.simulate(emsplat.make_phantom("blob-cluster", 10, 2), 8, grid, snr=1.0, seed=1)
    assert data.images().shape == (8, 24, 24)
    assert np.allclose(np.linalg.norm(data.quaternions(), axis=1), 1.0)

    cfg = emsplat.TrainConfig()
    cfg.n_gaussians = 40
    cfg.epochs = 3
    mixture, trace = emsplat.train(data, cfg)
    assert len(mixture) == 40
    assert trace.shape == (24, 4)
    np.testing.assert_array_equal(trace[:, 3], [0.001 * 0.1 ** int(e) for e in trace[:, 0]])
    assert emsplat.learning_rate_for_epoch(cfg, 2) == trace[-1, 3]

    emsplat.write_checkpoint(tmp_path / "m.cgs", mixture)
    assert emsplat.read_checkpoint(tmp_path / "m.cgs") == mixture


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        emsplat.make_phantom("torus", 5, 1)
    with pytest.raises(OSError):
        emsplat.read_checkpoint(tmp_path / "missing.cgs")
    with pytest.raises(ValueError):
        emsplat.GridSpec(0)
