"""Uniform Cartesian grids (N = 1 or 2), scalar fields and finite-difference stencils.

Grids are cell-centered and symmetric about the origin: with ``cells`` cells per
axis and half-width ``extent``, the spacing is h = 2*extent/cells and cell i sits
at -extent + (i + 1/2)h.  An odd cell count puts a cell exactly at the origin.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import OutsideSupport

DEFAULT_THRESHOLD_REL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform, origin-centered Cartesian grid with equal spacing on all axes."""

    dim: int
    extent: float
    cells: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.cells < 8:
            raise ValueError(f"need at least 8 cells per axis, got {self.cells}")
        if self.extent <= 0:
            raise ValueError("extent must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.dim

    def axis(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return -self.extent + (np.arange(self.cells) + 0.5) * self.h

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        ax = self.axis()
        if self.dim == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def origin_cell(self) -> tuple[int, ...]:
        """Index of the cell containing the origin."""
        return (self.cells // 2,) * self.dim if self.cells % 2 else ((self.cells - 1) // 2,) * self.dim

    def cell_center(self, cell: tuple[int, ...]) -> np.ndarray:
        return np.asarray([-self.extent + (i + 0.5) * self.h for i in cell])


@dataclass
class ScalarField:
    """Scalar values on a grid plus the threshold that defines its support."""

    grid: Grid
    values: np.ndarray
    support_threshold: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if self.support_threshold is None:
            peak = float(np.max(np.abs(self.values))) if self.values.size else 0.0
            self.support_threshold = DEFAULT_THRESHOLD_REL * peak

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.support_threshold)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.support_threshold)

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class SymMatrix2:
    """Symmetric 2x2 matrix in the units of a field's second derivatives."""

    a11: float
    a12: float
    a22: float

    def eigenvalues(self) -> tuple[float, float]:
        """(smallest, largest) from the closed form."""
        mean = 0.5 * (self.a11 + self.a22)
        disc = np.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return (mean - disc, mean + disc)

    @property
    def lambda_max(self) -> float:
        return self.eigenvalues()[1]


def field_from_function(grid: Grid, fn, support_threshold: float | None = None) -> ScalarField:
    """Sample fn(x) or fn(x, y) at cell centers."""
    return ScalarField(grid, fn(*grid.meshgrid()), support_threshold)


def gradient(f: ScalarField) -> tuple[ScalarField, ...]:
    """Per-axis derivative fields: central differences inside, one-sided on the frame."""
    h = f.grid.h
    if f.grid.dim == 1:
        return (f.with_values(np.gradient(f.values, h)),)
    gx, gy = np.gradient(f.values, h)
    return (f.with_values(gx), f.with_values(gy))


def gradient_norm_sq(f: ScalarField) -> np.ndarray:
    comps = gradient(f)
    return sum(g.values**2 for g in comps)


def max_gradient_magnitude(f: ScalarField) -> float:
    """Largest one-sided difference quotient over the grid (upwind estimator).

    One-sided differences see the slope on the interior side of the support
    edge, which is the meaningful gradient for a field vanishing outside.
    """
    v, h = f.values, f.grid.h
    worst = 0.0
    for ax in range(f.grid.dim):
        d = np.abs(np.diff(v, axis=ax)) / h
        if d.size:
            worst = max(worst, float(d.max()))
    return worst


def laplacian(f: ScalarField) -> ScalarField:
    """3/5-point Laplacian; the outermost cell layer is set to 0 and is not
    meaningful downstream."""
    v, h = f.values, f.grid.h
    out = np.zeros_like(v)
    if f.grid.dim == 1:
        out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    else:
        out[1:-1, 1:-1] = (
            v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4.0 * v[1:-1, 1:-1]
        ) / h**2
    return f.with_values(out)


def second_difference_fields(f: ScalarField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(d11, d12, d22) central second differences; frame cells are NaN."""
    v, h = f.values, f.grid.h
    if f.grid.dim != 2:
        raise ValueError("second_difference_fields requires a 2-D field")
    d11 = np.full_like(v, np.nan)
    d22 = np.full_like(v, np.nan)
    d12 = np.full_like(v, np.nan)
    d11[1:-1, 1:-1] = (v[2:, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / h**2
    d22[1:-1, 1:-1] = (v[1:-1, 2:] - 2.0 * v[1:-1, 1:-1] + v[1:-1, :-2]) / h**2
    d12[1:-1, 1:-1] = (v[2:, 2:] + v[:-2, :-2] - v[2:, :-2] - v[:-2, 2:]) / (4.0 * h**2)
    return d11, d12, d22


def support_mask(f: ScalarField, erode: int = 0) -> np.ndarray:
    """Cells with value > support_threshold, morphologically eroded ``erode`` times.

    Erosion uses the full 3x3 (or 3-cell) structuring element so that one
    erosion guarantees a full Hessian stencil inside the raw mask.
    """
    mask = f.values > f.support_threshold
    if erode > 0 and mask.any():
        structure = np.ones((3,) * f.grid.dim, dtype=bool)
        mask = ndimage.binary_erosion(mask, structure=structure, iterations=erode, border_value=0)
    return mask


def support_slope_scale(f: ScalarField, quantile: float = 0.9) -> float:
    """Robust gradient scale: a high quantile of the one-sided difference
    quotients between neighboring in-support cells.  Unlike the max it ignores
    the O(1/h) quotient across a jump edge."""
    v, h = f.values, f.grid.h
    on = v > f.support_threshold
    diffs = []
    for ax in range(f.grid.dim):
        lo = tuple(slice(None, -1) if a == ax else slice(None) for a in range(f.grid.dim))
        hi = tuple(slice(1, None) if a == ax else slice(None) for a in range(f.grid.dim))
        both = on[lo] & on[hi]
        if both.any():
            diffs.append(np.abs(v[hi][both] - v[lo][both]) / h)
    if not diffs:
        return 0.0
    return float(np.quantile(np.concatenate(diffs), quantile))


def resolved_support_mask(f: ScalarField, erode: int = 0, slope_cells: float = 1.0) -> np.ndarray:
    """Support restricted to values resolvable at one-cell gradient resolution.

    Explicit schemes seed a skirt of cells with values far below h*|grad f|;
    such cells cannot be distinguished from zero at the grid scale and poison
    curvature stencils.  The cutoff max(threshold, slope_cells*h*scale), with
    scale a robust in-support gradient quantile, converges to the true support
    as h -> 0 and leaves jump-edged fields (no degenerate skirt) untouched.
    """
    cut = max(f.support_threshold, slope_cells * f.grid.h * support_slope_scale(f))
    lifted = ScalarField(f.grid, f.values, cut)
    return support_mask(lifted, erode=erode)


def hessian_at(f: ScalarField, cell: tuple[int, ...]) -> SymMatrix2:
    """Central second differences at one cell; requires the full 3x3 (or 3-cell)
    neighborhood to lie inside the support eroded by one cell."""
    eroded = support_mask(f, erode=1)
    if not eroded[cell]:
        raise OutsideSupport(f"stencil at {cell} touches cells below the support threshold")
    v, h = f.values, f.grid.h
    if f.grid.dim == 1:
        (i,) = cell
        a11 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h**2
        return SymMatrix2(a11, 0.0, 0.0)
    i, j = cell
    a11 = (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) / h**2
    a22 = (v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]) / h**2
    a12 = (v[i + 1, j + 1] + v[i - 1, j - 1] - v[i + 1, j - 1] - v[i - 1, j + 1]) / (4.0 * h**2)
    return SymMatrix2(a11, a12, a22)


# ---------------------------------------------------------------------------
# field dump format: header "# dim,cells,extent,h,threshold" then one row per
# cell "i,j,x,y,value" (1-D drops the j/y columns).  17 significant digits give
# a bit-exact float round-trip.

def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_field_csv(f: ScalarField, path_or_buf) -> None:
    buf = io.StringIO()
    g = f.grid
    buf.write(f"# dim,cells,extent,h,threshold\n")
    buf.write(f"# {g.dim},{g.cells},{_fmt(g.extent)},{_fmt(g.h)},{_fmt(f.support_threshold)}\n")
    ax = g.axis()
    if g.dim == 1:
        buf.write("i,x,value\n")
        for i in range(g.cells):
            buf.write(f"{i},{_fmt(ax[i])},{_fmt(f.values[i])}\n")
    else:
        buf.write("i,j,x,y,value\n")
        for i in range(g.cells):
            xi = _fmt(ax[i])
            for j in range(g.cells):
                buf.write(f"{i},{j},{xi},{_fmt(ax[j])},{_fmt(f.values[i, j])}\n")
    data = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(data)
    else:
        with open(path_or_buf, "w") as fp:
            fp.write(data)


def read_field_csv(path_or_buf) -> ScalarField:
    if hasattr(path_or_buf, "read"):
        lines = path_or_buf.read().splitlines()
    else:
        with open(path_or_buf) as fp:
            lines = fp.read().splitlines()
    meta = lines[1].lstrip("# ").split(",")
    dim, cells = int(meta[0]), int(meta[1])
    extent, threshold = float(meta[2]), float(meta[4])
    grid = Grid(dim, extent, cells)
    values = np.zeros(grid.shape)
    for line in lines[3:]:
        parts = line.split(",")
        if dim == 1:
            values[int(parts[0])] = float(parts[2])
        else:
            values[int(parts[0]), int(parts[1])] = float(parts[4])
    return ScalarField(grid, values, threshold)
