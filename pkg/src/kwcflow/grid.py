"""Cell-centered rectangular grids and discrete calculus with Neumann walls.

Scalar fields live at cell centers as plain ``numpy`` arrays of shape
``grid.shape``.  Vector fields come in two layouts:

* face layout (the primary one): a tuple with one array per axis, holding
  the normal component on the faces of that axis.  In 1D the tuple is
  ``(gx,)`` with ``gx.shape == (n + 1,)``; in 2D it is ``(gx, gy)`` with
  ``gx.shape == (nx + 1, ny)`` and ``gy.shape == (nx, ny + 1)``.
* cell layout: an array of shape ``(dim,) + grid.shape`` obtained by
  averaging the two adjacent faces per axis, used wherever the full
  gradient vector is needed pointwise (e.g. inside a nonlinear flux).

Homogeneous Neumann boundary conditions are realized by mirror ghost
cells, so every gradient has zero normal component on boundary faces and
the divergence enforces the matching zero-flux convention.  With the face
inner product weighted by the cell volume this makes ``div`` exactly the
negative adjoint of ``grad``, which the energy-dissipation checks in the
rest of the package rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid",
    "build_grid",
    "save_field",
    "load_field",
    "cosine_field",
    "constant_field",
    "bump_field",
    "random_smooth_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on (0, L1) x ... with Neumann walls.

    Cell centers sit at ``(i + 1/2) * spacing``; at least 4 cells per axis
    are required so the boundary stencils never overlap.
    """

    dim: int
    cells: tuple[int, ...]
    extents: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "extents", tuple(float(L) for L in self.extents))
        if len(self.cells) != self.dim or len(self.extents) != self.dim:
            raise ValueError("cells and extents must each have one entry per axis")
        if any(n < 4 for n in self.cells):
            raise ValueError(f"need at least 4 cells per axis, got {self.cells}")
        if any(L <= 0 for L in self.extents):
            raise ValueError(f"extents must be positive, got {self.extents}")

    # -- geometry -----------------------------------------------------------

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``grid.shape``, one per axis."""
        axes = [self.centers(d) for d in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def constant(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    # -- validation ---------------------------------------------------------

    def check_scalar(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"{name}: expected shape {self.shape}, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"{name}: contains non-finite values")
        return f

    def face_shapes(self) -> tuple[tuple[int, ...], ...]:
        shapes = []
        for d in range(self.dim):
            s = list(self.shape)
            s[d] += 1
            shapes.append(tuple(s))
        return tuple(shapes)

    def check_faces(self, F, name: str = "vector field"):
        if len(F) != self.dim:
            raise ValueError(f"{name}: expected {self.dim} components, got {len(F)}")
        out = []
        for d, (comp, shp) in enumerate(zip(F, self.face_shapes())):
            comp = np.asarray(comp, dtype=float)
            if comp.shape != shp:
                raise ValueError(f"{name}: axis-{d} faces must have shape {shp}, got {comp.shape}")
            if not np.all(np.isfinite(comp)):
                raise ValueError(f"{name}: non-finite values on axis-{d} faces")
            out.append(comp)
        return tuple(out)

    # -- discrete calculus ----------------------------------------------------

    def grad(self, f: np.ndarray) -> tuple[np.ndarray, ...]:
        """Face-valued gradient; boundary faces are exactly zero (mirror ghosts)."""
        f = self.check_scalar(f)
        comps = []
        for d in range(self.dim):
            h = self.spacing[d]
            g = np.zeros(self.face_shapes()[d])
            interior = [slice(None)] * self.dim
            interior[d] = slice(1, self.cells[d])
            lo = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            hi = [slice(None)] * self.dim
            hi[d] = slice(1, None)
            g[tuple(interior)] = (f[tuple(hi)] - f[tuple(lo)]) / h
            comps.append(g)
        return tuple(comps)

    def div(self, F) -> np.ndarray:
        """Cell-valued divergence with the zero-flux convention on the walls.

        Boundary-face values of ``F`` are ignored (treated as zero), which
        makes ``div`` the exact negative adjoint of :meth:`grad`.
        """
        F = self.check_faces(F)
        out = np.zeros(self.shape)
        for d in range(self.dim):
            h = self.spacing[d]
            comp = F[d].copy()
            first = [slice(None)] * self.dim
            first[d] = 0
            last = [slice(None)] * self.dim
            last[d] = -1
            comp[tuple(first)] = 0.0
            comp[tuple(last)] = 0.0
            hi = [slice(None)] * self.dim
            hi[d] = slice(1, None)
            lo = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            out += (comp[tuple(hi)] - comp[tuple(lo)]) / h
        return out

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """Neumann Laplacian ``div(grad(f))``: symmetric, kills constants exactly."""
        return self.div(self.grad(f))

    def face_to_cell(self, F) -> np.ndarray:
        """Average face values back onto cells; shape ``(dim,) + grid.shape``."""
        F = self.check_faces(F)
        out = np.zeros((self.dim,) + self.shape)
        for d in range(self.dim):
            lo = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            hi = [slice(None)] * self.dim
            hi[d] = slice(1, None)
            out[d] = 0.5 * (F[d][tuple(lo)] + F[d][tuple(hi)])
        return out

    def cell_to_face(self, V: np.ndarray) -> tuple[np.ndarray, ...]:
        """Adjoint of :meth:`face_to_cell` (transpose averaging, cells to faces)."""
        V = np.asarray(V, dtype=float)
        if V.shape != (self.dim,) + self.shape:
            raise ValueError(f"expected cell-vector shape {(self.dim,) + self.shape}, got {V.shape}")
        comps = []
        for d in range(self.dim):
            g = np.zeros(self.face_shapes()[d])
            interior = [slice(None)] * self.dim
            interior[d] = slice(1, self.cells[d])
            lo = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            hi = [slice(None)] * self.dim
            hi[d] = slice(1, None)
            g[tuple(interior)] = 0.5 * (V[d][tuple(lo)] + V[d][tuple(hi)])
            first = [slice(None)] * self.dim
            first[d] = 0
            last = [slice(None)] * self.dim
            last[d] = -1
            g[tuple(first)] = 0.5 * V[d][tuple(first)]
            g[tuple(last)] = 0.5 * V[d][tuple(last)]
            comps.append(g)
        return tuple(comps)

    def grad_cell(self, f: np.ndarray) -> np.ndarray:
        """Cell-valued gradient: face gradient averaged back onto cells."""
        return self.face_to_cell(self.grad(f))

    # -- inner products and norms --------------------------------------------

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Discrete L2 pairing, cell-volume weighted; both fields must conform."""
        f, g = np.asarray(f), np.asarray(g)
        if f.shape != self.shape or g.shape != self.shape:
            raise ValueError(f"fields do not share this grid: {f.shape}, {g.shape} vs {self.shape}")
        return float(np.sum(f * g) * self.cell_volume)

    def inner_faces(self, F, G) -> float:
        """Face pairing with cell-volume weights (matches the adjoint identity)."""
        total = 0.0
        for d in range(self.dim):
            total += float(np.sum(np.asarray(F[d]) * np.asarray(G[d])))
        return total * self.cell_volume

    def norm_h(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    def norm_v(self, f: np.ndarray) -> float:
        G = self.grad(f)
        return float(np.sqrt(max(self.inner(f, f) + self.inner_faces(G, G), 0.0)))

    def norm_h2(self, f: np.ndarray) -> float:
        """H2 surrogate via the elliptic-regularity identity ``|-lap f + f|_H``."""
        return self.norm_h(-self.laplacian(f) + np.asarray(f, dtype=float))

    # -- sparse operator assembly (used by the elliptic solvers) --------------

    def _flat_index(self) -> np.ndarray:
        return np.arange(self.n_cells).reshape(self.shape)

    @cached_property
    def gradient_matrices(self) -> tuple[sp.csr_matrix, ...]:
        """Per-axis face-gradient matrices acting on flat cell vectors."""
        idx = self._flat_index()
        mats = []
        for d in range(self.dim):
            h = self.spacing[d]
            fshape = self.face_shapes()[d]
            nfaces = int(np.prod(fshape))
            fidx = np.arange(nfaces).reshape(fshape)
            interior = [slice(None)] * self.dim
            interior[d] = slice(1, self.cells[d])
            rows = fidx[tuple(interior)].ravel()
            lo = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            hi = [slice(None)] * self.dim
            hi[d] = slice(1, None)
            cols_lo = idx[tuple(lo)].ravel()
            cols_hi = idx[tuple(hi)].ravel()
            data = np.full(rows.size, 1.0 / h)
            M = sp.coo_matrix(
                (
                    np.concatenate([data, -data]),
                    (np.concatenate([rows, rows]), np.concatenate([cols_hi, cols_lo])),
                ),
                shape=(nfaces, self.n_cells),
            )
            mats.append(M.tocsr())
        return tuple(mats)

    @cached_property
    def averaging_matrices(self) -> tuple[sp.csr_matrix, ...]:
        """Per-axis face-to-cell averaging matrices."""
        idx = self._flat_index()
        mats = []
        for d in range(self.dim):
            fshape = self.face_shapes()[d]
            nfaces = int(np.prod(fshape))
            fidx = np.arange(nfaces).reshape(fshape)
            lo = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            hi = [slice(None)] * self.dim
            hi[d] = slice(1, None)
            rows = idx.ravel()
            cols_lo = fidx[tuple(lo)].ravel()
            cols_hi = fidx[tuple(hi)].ravel()
            data = np.full(rows.size, 0.5)
            M = sp.coo_matrix(
                (
                    np.concatenate([data, data]),
                    (np.concatenate([rows, rows]), np.concatenate([cols_lo, cols_hi])),
                ),
                shape=(self.n_cells, nfaces),
            )
            mats.append(M.tocsr())
        return tuple(mats)

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        """Positive-semidefinite matrix of ``-laplacian`` on flat cell vectors."""
        mats = self.gradient_matrices
        A = mats[0].T @ mats[0]
        for d in range(1, self.dim):
            A = A + mats[d].T @ mats[d]
        return A.tocsr()

    @cached_property
    def cell_gradient_matrix(self) -> sp.csr_matrix:
        """Stacked cell-gradient matrix (dim * n_cells rows)."""
        blocks = [A @ G for A, G in zip(self.averaging_matrices, self.gradient_matrices)]
        return sp.vstack(blocks).tocsr()


def build_grid(dim: int, cells_per_axis, extents) -> Grid:
    """Construct and validate a :class:`Grid`."""
    return Grid(dim=int(dim), cells=tuple(cells_per_axis), extents=tuple(extents))


# -- field snapshot files ------------------------------------------------------


def save_field(path, grid: Grid, values: np.ndarray) -> None:
    """Write a field snapshot: one commented header line, then index,x[,y],value."""
    values = grid.check_scalar(values)
    cells = ",".join(str(n) for n in grid.cells)
    extents = ",".join(repr(L) for L in grid.extents)
    coords = grid.meshgrid()
    flat = values.ravel()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# grid dim={grid.dim} cells={cells} extents={extents}\n")
        for i in range(grid.n_cells):
            xs = ",".join(repr(float(c.ravel()[i])) for c in coords)
            fh.write(f"{i},{xs},{float(flat[i])!r}\n")


def load_field(path) -> tuple[Grid, np.ndarray]:
    """Read a field snapshot written by :func:`save_field`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid"):
            raise ValueError(f"{path}: missing '# grid' header line")
        meta = {}
        for token in header[len("# grid"):].split():
            key, _, val = token.partition("=")
            meta[key] = val
        dim = int(meta["dim"])
        cells = tuple(int(s) for s in meta["cells"].split(","))
        extents = tuple(float(s) for s in meta["extents"].split(","))
        grid = Grid(dim=dim, cells=cells, extents=extents)
        flat = np.empty(grid.n_cells)
        seen = 0
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            i = int(parts[0])
            flat[i] = float(parts[-1])
            seen += 1
        if seen != grid.n_cells:
            raise ValueError(f"{path}: expected {grid.n_cells} rows, got {seen}")
    return grid, flat.reshape(grid.shape)


# -- field constructors --------------------------------------------------------


def constant_field(grid: Grid, value: float) -> np.ndarray:
    return grid.constant(value)


def cosine_field(grid: Grid, mean: float = 0.0, amplitude: float = 1.0, mode=1) -> np.ndarray:
    """Neumann-compatible cosine profile ``mean + amp * prod_d cos(k_d pi x_d / L_d)``."""
    modes = (mode,) * grid.dim if np.isscalar(mode) else tuple(mode)
    out = grid.constant(0.0) + 1.0
    for d, (x, L, k) in enumerate(zip(grid.meshgrid(), grid.extents, modes)):
        if k:
            out = out * np.cos(k * np.pi * x / L)
    return mean + amplitude * out


def bump_field(grid: Grid, center=0.5, width: float = 0.1, amplitude: float = 1.0,
               baseline: float = 0.0) -> np.ndarray:
    """Smooth Gaussian bump, handy as a localized perturbation."""
    centers = (center,) * grid.dim if np.isscalar(center) else tuple(center)
    r2 = grid.constant(0.0)
    for x, c in zip(grid.meshgrid(), centers):
        r2 = r2 + (x - c) ** 2
    return baseline + amplitude * np.exp(-r2 / (2.0 * width**2))


def random_smooth_field(grid: Grid, rng, mean: float = 0.0, amplitude: float = 1.0,
                        max_mode: int = 6) -> np.ndarray:
    """Seeded band-limited cosine series; smooth and Neumann-compatible.

    Coefficients decay like 1/k^2 so the profile stays resolved on coarse
    grids; ``rng`` is a ``numpy.random.Generator``.
    """
    out = grid.constant(0.0)
    coords = grid.meshgrid()
    if grid.dim == 1:
        for k in range(1, max_mode + 1):
            c = rng.uniform(-1.0, 1.0)
            out += (c / k**2) * np.cos(k * np.pi * coords[0] / grid.extents[0])
    else:
        for kx in range(0, max_mode + 1):
            for ky in range(0, max_mode + 1):
                if kx == 0 and ky == 0:
                    continue
                c = rng.uniform(-1.0, 1.0)
                decay = (kx**2 + ky**2)
                out += (c / decay) * (
                    np.cos(kx * np.pi * coords[0] / grid.extents[0])
                    * np.cos(ky * np.pi * coords[1] / grid.extents[1])
                )
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 1.0 / peak
    return mean + amplitude * out
