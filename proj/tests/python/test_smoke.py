import numpy as np
import pytest

import uiess


def test_jaffe_matches_formula():
    rng = np.random.default_rng(0)
    j = rng.random((3, 8, 9))
    d = rng.random((8, 9)) * 3
    eta, amb = [1.2, 0.5, 0.3], [0.1, 0.4, 0.6]
    out = uiess.degrade_jaffe(j, d, eta, amb)
    t = np.exp(-np.asarray(eta)[:, None, None] * d[None])
    expected = j * t + np.asarray(amb)[:, None, None] * (1 - t)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_metrics():
    gray = np.full((3, 32, 32), 0.5)
    assert uiess.psnr(gray, gray) == 99.0
    assert uiess.ssim(gray, gray) == 1.0
    assert uiess.uiqm(gray)["uicm"] == 0.0
    assert uiess.uciqe(gray)["uciqe"] == 0.0
    with pytest.raises(ValueError):
        uiess.uiqm(np.zeros((3, 8, 8)))


def test_manipulate_style_and_stats():
    z, zc = np.array([1.0, 2.0, 3.0]), np.array([3.0, 2.0, 1.0])
    np.testing.assert_array_equal(uiess.manipulate_style(z, zc, 0.5), [2.0, 2.0, 2.0])
    assert uiess.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert uiess.silhouette([[0, 0], [0, 0.1], [5, 5], [5, 5.1]], [0, 0, 1, 1]) > 0.9


def test_scene_and_cli(tmp_path):
    clean, depth = uiess.render_clean_scene(3, 16, 16)
    assert clean.shape == (3, 16, 16) and depth.shape == (16, 16)
    assert uiess.run_cli(["synth", "--count", "4", "--height", "16", "--width", "16", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest.txt").exists()
    assert uiess.run_cli(["synth", "--nope"]) == 2
