import numpy as np
import pytest

from gvstar.chart import (
    Bump,
    ChartBox,
    ChartError,
    Grid,
    bump,
    directional_derivative,
    gradient,
    integrate,
    partial,
    simpson_weights,
)

BOX = ChartBox(("x", "y", "z"), (0.0, -1.0, 0.5), (1.0, 1.0, 2.0))


def test_box_validation():
    with pytest.raises(ChartError):
        ChartBox(("x", "x", "z"), (0, 0, 0), (1, 1, 1))
    with pytest.raises(ChartError):
        ChartBox(("x", "y", "z"), (0, 0, 1), (1, 1, 1))
    with pytest.raises(ChartError):
        ChartBox(("x", "y", "z"), (0, 0, 0), (1, 1, 1), orientation=2)
    with pytest.raises(ChartError):
        BOX.sub_box((0, 0, 0), (2, 1, 1))


def test_grid_nodes_and_spacing():
    g = Grid.make(BOX, (4, 8, 6))
    assert g.shape == (5, 9, 7)
    np.testing.assert_allclose(g.h, [0.25, 0.25, 0.25])
    assert g.points()[:, -1, -1, -1].tolist() == [1.0, 1.0, 2.0]
    with pytest.raises(ChartError):
        Grid.make(BOX, 3)


def test_stencils_exact_on_quartics():
    g = Grid.make(BOX, 8)
    x, y, z = g.points()
    f = x**4 - 2 * x * y**3 + z**4 * y
    d = gradient(f, g)
    np.testing.assert_allclose(d[0], 4 * x**3 - 2 * y**3, atol=1e-11)
    np.testing.assert_allclose(d[1], -6 * x * y**2 + z**4, atol=1e-11)
    np.testing.assert_allclose(d[2], 4 * z**3 * y, atol=1e-11)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_stencil_fourth_order(axis):
    errs = []
    for n in (32, 64):
        g = Grid.make(BOX, n)
        p = g.points()
        f = np.sin(3 * p[axis])
        errs.append(np.max(np.abs(partial(f, axis, g.h[axis]) - 3 * np.cos(3 * p[axis]))))
    assert errs[0] / errs[1] > 14


def test_directional_derivative_leading_axes():
    g = Grid.make(BOX, 8)
    x, y, z = g.points()
    V = np.stack([np.ones_like(x), x, np.zeros_like(x)])
    f = np.stack([x * y, y**2])
    out = directional_derivative(f, V, g)
    np.testing.assert_allclose(out[0], y + x * x, atol=1e-12)
    np.testing.assert_allclose(out[1], 2 * y * x, atol=1e-12)


def test_simpson_exact_on_cubics_and_needs_even_n():
    g = Grid.make(BOX, (4, 6, 8))
    x, y, z = g.points()
    assert integrate(x**3 * y**2 + z, 1.0, g) == pytest.approx(0.25 * (2 / 3) * 1.5 + 2 * (2**2 - 0.25) / 2 * 1.0)
    with pytest.raises(ChartError):
        simpson_weights(5, 0.1)


def test_integrate_rejects_bad_density():
    g = Grid.make(BOX, 4)
    with pytest.raises(ChartError):
        integrate(np.ones(g.shape), np.zeros(g.shape), g)


def test_bump_support_and_jets():
    b = Bump((0.5, 0.0, 1.25), (0.3, 0.5, 0.4))
    p = np.array([[0.5, 0.81, 0.6], [0.0, 0.0, 0.2], [1.25, 1.25, 1.3]])
    j = b(p)
    assert j.val[0] == pytest.approx(1.0)
    assert j.val[1] == 0.0 and np.all(j.grad[:, 1] == 0)
    h = 1e-5
    for a in range(3):
        e = np.zeros((3, 1))
        e[a] = h
        fd = (b(p[:, 2:] + e).val - b(p[:, 2:] - e).val) / (2 * h)
        assert j.grad[a, 2] == pytest.approx(fd[0], rel=1e-7)


def test_bump_collar_check():
    g = Grid.make(BOX, 16)
    bump((0.5, 0.0, 1.25), (0.3, 0.5, 0.4), g)
    with pytest.raises(ChartError):
        bump((0.5, 0.0, 1.25), (0.49, 0.5, 0.4), g)
