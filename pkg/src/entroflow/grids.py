"""Uniform rectangular grids and the fields sampled on them.

Everything downstream (quadrature, discrete gradients, the finite-volume
solver) shares the conventions fixed here:

* cells are uniform boxes; values live at cell centers,
* integrals are midpoint sums  sum(values) * cell_volume,
* the discrete gradient is the second-order central difference in the
  interior and the second-order one-sided difference on the boundary.

Grids are rectangular and uniform by construction; non-uniform spacings are
rejected at the type level (there is no way to build one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASS_TOL = 1e-8


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box divided into uniform cells.

    lo, hi : per-dimension bounds (state units)
    cells  : per-dimension cell counts, each >= 2
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "cells", cells)
        if not (len(lo) == len(hi) == len(cells)):
            raise ValueError("lo, hi, cells must have equal length")
        if len(lo) < 1:
            raise ValueError("grid dimension must be >= 1")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("upper bound must exceed lower bound")
        if any(c < 2 for c in cells):
            raise ValueError("need at least 2 cells per dimension")

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def dx(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    def axis_centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        d = self.dx[axis]
        return self.lo[axis] + d * (np.arange(self.cells[axis]) + 0.5)

    def axis_faces(self, axis: int) -> np.ndarray:
        """Interior face coordinates along one axis (cells-1 of them)."""
        d = self.dx[axis]
        return self.lo[axis] + d * np.arange(1, self.cells[axis])

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``shape + (ndim,)``."""
        axes = [self.axis_centers(a) for a in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def points(self) -> np.ndarray:
        """Cell centers flattened to ``(size, ndim)`` in C order."""
        return self.centers().reshape(-1, self.ndim)

    def boundary_mask(self) -> np.ndarray:
        """Boolean array, True on cells touching the box boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        for a in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[a] = 0
            mask[tuple(idx)] = True
            idx[a] = -1
            mask[tuple(idx)] = True
        return mask

    def cell_index(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map points ``(m, ndim)`` to flat cell indices.

        Returns (flat_index, inside) where ``inside`` marks points within the
        box; indices of outside points are clipped and must be masked by the
        caller.
        """
        x = np.atleast_2d(x)
        ij = np.floor((x - np.asarray(self.lo)) / self.dx).astype(int)
        inside = np.all((ij >= 0) & (ij < np.asarray(self.cells)), axis=1)
        ij = np.clip(ij, 0, np.asarray(self.cells) - 1)
        return np.ravel_multi_index(tuple(ij.T), self.cells), inside


def quadrature(grid: Grid, values: np.ndarray) -> float:
    """Midpoint-rule integral of a sampled scalar field."""
    return float(np.sum(values) * grid.cell_volume)


def gradient(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Discrete gradient, shape ``grid.shape + (ndim,)``.

    Central differences in the interior, second-order one-sided at the
    boundary (exact for quadratics, so Gaussian log-densities differentiate
    exactly).
    """
    spacings = [float(d) for d in grid.dx]
    if grid.ndim == 1:
        g = np.gradient(values, spacings[0], edge_order=2)
        return g[..., np.newaxis]
    parts = np.gradient(values, *spacings, edge_order=2)
    return np.stack(parts, axis=-1)


class GridDensity:
    """Nonnegative sampled probability density on a grid.

    The quadrature mass must match the declared ``mass`` (normally 1) to
    within ``MASS_TOL``.  Instances are immutable once built.
    """

    def __init__(self, grid: Grid, values: np.ndarray, mass: float = 1.0,
                 boundary_suspect: bool = False):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < 0.0):
            raise ValueError("density values must be nonnegative")
        got = quadrature(grid, values)
        if abs(got - mass) > MASS_TOL:
            raise ValueError(f"quadrature mass {got!r} != declared mass {mass!r}")
        self.grid = grid
        self.values = values.copy()
        self.values.flags.writeable = False
        self.mass = float(mass)
        self.boundary_suspect = bool(boundary_suspect)

    def integrate(self) -> float:
        return quadrature(self.grid, self.values)

    def log_values(self) -> np.ndarray:
        """log(values); zero cells map to -inf without warnings."""
        with np.errstate(divide="ignore"):
            return np.log(self.values)

    def mean(self) -> np.ndarray:
        x = self.grid.centers()
        w = self.values[..., np.newaxis]
        return np.sum(x * w, axis=tuple(range(self.grid.ndim))) * self.grid.cell_volume / self.mass

    def covariance(self) -> np.ndarray:
        x = self.grid.centers()
        m = self.mean()
        d = x - m
        w = self.values[..., np.newaxis, np.newaxis]
        outer = d[..., :, np.newaxis] * d[..., np.newaxis, :]
        return np.sum(outer * w, axis=tuple(range(self.grid.ndim))) * self.grid.cell_volume / self.mass

    def renormalized(self, mass: float = 1.0) -> "GridDensity":
        got = self.integrate()
        if got <= 0.0:
            raise ValueError("cannot renormalize a zero density")
        return GridDensity(self.grid, self.values * (mass / got), mass=mass,
                           boundary_suspect=self.boundary_suspect)

    def __eq__(self, other) -> bool:
        return (isinstance(other, GridDensity) and self.grid == other.grid
                and np.array_equal(self.values, other.values))


class VectorFieldGrid:
    """One vector per cell (state/time units); shape ``grid.shape + (ndim,)``."""

    def __init__(self, grid: Grid, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.shape != grid.shape + (grid.ndim,):
            raise ValueError(
                f"vectors shape {vectors.shape} != {grid.shape + (grid.ndim,)}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vector field entries must be finite")
        self.grid = grid
        self.vectors = vectors.copy()
        self.vectors.flags.writeable = False

    @classmethod
    def zero(cls, grid: Grid) -> "VectorFieldGrid":
        return cls(grid, np.zeros(grid.shape + (grid.ndim,)))

    @classmethod
    def from_callable(cls, grid: Grid, f) -> "VectorFieldGrid":
        """Sample ``f(points) -> (m, ndim)`` at cell centers."""
        vals = np.asarray(f(grid.points()), dtype=float)
        return cls(grid, vals.reshape(grid.shape + (grid.ndim,)))


def require_same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


def density_to_csv(density: GridDensity, path) -> None:
    """Write ``# grid: lo hi cells`` header then one ``x..., value`` row per cell."""
    grid = density.grid
    header = "# grid: " + " ".join(
        f"{grid.lo[a]:.17g} {grid.hi[a]:.17g} {grid.cells[a]:d}" for a in range(grid.ndim))
    pts = grid.points()
    vals = density.values.reshape(-1)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p, v in zip(pts, vals):
            coords = ",".join(f"{c:.17g}" for c in p)
            fh.write(f"{coords},{v:.17g}\n")


def density_from_csv(path) -> GridDensity:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid:"):
            raise ValueError("missing '# grid:' header")
        toks = header[len("# grid:"):].split()
        if len(toks) % 3 != 0:
            raise ValueError("grid header must hold lo hi cells per dimension")
        lo, hi, cells = [], [], []
        for i in range(0, len(toks), 3):
            lo.append(float(toks[i]))
            hi.append(float(toks[i + 1]))
            cells.append(int(toks[i + 2]))
        grid = Grid(tuple(lo), tuple(hi), tuple(cells))
        vals = np.empty(grid.size)
        for k in range(grid.size):
            row = fh.readline().split(",")
            vals[k] = float(row[-1])
    values = vals.reshape(grid.shape)
    return GridDensity(grid, values, mass=quadrature(grid, values))
