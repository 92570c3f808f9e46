import numpy as np
import pytest

from entroflow import Grid, GridDensity, VectorFieldGrid, density_from_csv, density_to_csv
from entroflow.grids import gradient, quadrature


def test_grid_invariants():
    with pytest.raises(ValueError):
        Grid((0.0,), (0.0,), (8,))
    with pytest.raises(ValueError):
        Grid((0.0,), (1.0,), (1,))
    with pytest.raises(ValueError):
        Grid((), (), ())
    g = Grid((-2.0, 0.0), (2.0, 1.0), (8, 4))
    assert g.ndim == 2
    assert g.cell_volume == pytest.approx(0.5 * 0.25)
    assert g.axis_centers(0)[0] == pytest.approx(-1.75)


def test_points_and_boundary_mask():
    g = Grid((0.0, 0.0), (1.0, 1.0), (4, 3))
    assert g.points().shape == (12, 2)
    mask = g.boundary_mask()
    assert mask.sum() == 12 - 2 * 1  # all but the two interior cells
    assert not mask[1, 1] and not mask[2, 1]


def test_cell_index_roundtrip():
    g = Grid((-1.0, -1.0), (1.0, 1.0), (10, 10))
    pts = g.points()
    idx, inside = g.cell_index(pts)
    assert np.all(inside)
    assert np.array_equal(idx, np.arange(g.size))
    _, inside = g.cell_index(np.array([[2.0, 0.0]]))
    assert not inside[0]


def test_gradient_exact_for_quadratics():
    # central interior + second-order one-sided edges: quadratics differentiate exactly
    g = Grid((-3.0,), (5.0,), (64,))
    x = g.axis_centers(0)
    vals = 0.5 * x**2 - 2.0 * x + 1.0
    got = gradient(g, vals)[..., 0]
    assert np.allclose(got, x - 2.0, atol=1e-12)

    g2 = Grid((-1.0, -1.0), (1.0, 1.0), (16, 12))
    c = g2.centers()
    f = c[..., 0] ** 2 + 3.0 * c[..., 0] * c[..., 1]
    got = gradient(g2, f)
    assert np.allclose(got[..., 0], 2 * c[..., 0] + 3 * c[..., 1], atol=1e-12)
    assert np.allclose(got[..., 1], 3 * c[..., 0], atol=1e-12)


def test_density_validation():
    g = Grid((0.0,), (1.0,), (4,))
    with pytest.raises(ValueError):
        GridDensity(g, np.array([1.0, -0.1, 1.0, 1.0]))
    with pytest.raises(ValueError):
        GridDensity(g, np.full(4, 2.0))  # mass 2 vs declared 1
    d = GridDensity(g, np.full(4, 2.0), mass=2.0)
    assert d.integrate() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        d.values[0] = 3.0  # immutable


def test_density_moments():
    g = Grid((-10.0,), (10.0,), (1024,))
    x = g.axis_centers(0)
    vals = np.exp(-((x - 1.0) ** 2) / 4.0)
    vals /= quadrature(g, vals)
    d = GridDensity(g, vals)
    assert d.mean()[0] == pytest.approx(1.0, abs=1e-8)
    assert d.covariance()[0, 0] == pytest.approx(2.0, rel=1e-7)


def test_vector_field_validation():
    g = Grid((0.0,), (1.0,), (4,))
    with pytest.raises(ValueError):
        VectorFieldGrid(g, np.full((4,), 1.0))  # missing component axis
    with pytest.raises(ValueError):
        VectorFieldGrid(g, np.full((4, 1), np.nan))
    z = VectorFieldGrid.zero(g)
    assert z.vectors.shape == (4, 1)


def test_csv_roundtrip(tmp_path):
    g = Grid((-2.0, 0.0), (2.0, 1.0), (8, 4))
    rng = np.random.default_rng(7)
    vals = rng.uniform(0.1, 1.0, size=g.shape)
    vals /= quadrature(g, vals)
    d = GridDensity(g, vals)
    path = tmp_path / "density.csv"
    density_to_csv(d, path)
    back = density_from_csv(path)
    assert back.grid == g
    assert np.array_equal(back.values, d.values)  # 17 sig digits: bit-exact
