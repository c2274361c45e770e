"""Initial-condition presets: positivity, gradients, parsing."""

import numpy as np
import pytest

from chemorepfem import get_preset


@pytest.fixture(scope="module")
def grid():
    xs = np.linspace(0.0, 2.0, 301)
    return np.meshgrid(xs, xs)


@pytest.mark.parametrize("name", ["gauss", "cosine"])
def test_presets_strictly_positive(grid, name):
    x, y = grid
    pre = get_preset(name)
    assert pre.u0(x, y).min() > 0.0
    assert pre.v0(x, y).min() > 0.0


def test_gauss_center_values(grid):
    pre = get_preset("gauss")
    assert pre.u0(1.0, 1.0) == pytest.approx(1e-4, rel=1e-12)
    assert pre.v0(1.0, 1.0) == pytest.approx(100.0001, rel=1e-12)
    x, y = grid
    assert pre.u0(x, y).min() == pytest.approx(1e-4, rel=1e-9)
    assert pre.v0(x, y).max() == pytest.approx(100.0001, rel=1e-9)


def test_cosine_range():
    pre = get_preset("cosine")
    assert pre.u0(0.0, 0.0) == pytest.approx(28.0001)
    assert pre.v0(0.0, 0.0) == pytest.approx(0.0001)
    assert pre.u0(0.25, 0.0) == pytest.approx(14.0001)


@pytest.mark.parametrize("name", ["gauss", "cosine", "constant:3:4"])
def test_analytic_gradients_match_finite_differences(name):
    pre = get_preset(name)
    rng = np.random.default_rng(8)
    x = rng.uniform(0.1, 1.9, 50)
    y = rng.uniform(0.1, 1.9, 50)
    gx, gy = pre.grad_v0(x, y)
    d = 1e-6
    fx = (pre.v0(x + d, y) - pre.v0(x - d, y)) / (2 * d)
    fy = (pre.v0(x, y + d) - pre.v0(x, y - d)) / (2 * d)
    scale = np.abs(fx).max() + np.abs(fy).max() + 1.0
    assert np.abs(gx - fx).max() <= 1e-6 * scale
    assert np.abs(gy - fy).max() <= 1e-6 * scale


def test_constant_preset_parsing():
    pre = get_preset("constant:2.5:0.5")
    assert pre.u0(np.array([0.3]), np.array([1.1]))[0] == 2.5
    assert pre.v0(np.array([0.3]), np.array([1.1]))[0] == 0.5
    for bad in ("constant:1", "constant:a:b", "constant:-1:2", "bogus"):
        with pytest.raises(ValueError):
            get_preset(bad)
