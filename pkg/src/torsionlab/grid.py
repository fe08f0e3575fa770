"""Finite-difference grids for zero-Dirichlet problems.

Two grid modes are supported:

* masked 2D Cartesian lattices (rectangles and staircase disks) with the
  classical 5-point stencil, and
* 1D radial profiles of an N-ball using the conservative three-point stencil
  for -(r^{N-1} u')' / r^{N-1}.

The boundary condition u = 0 is imposed by ghost-value elimination: couplings
from an interior node to a missing neighbour turn into a diagonal
contribution.  All off-diagonal couplings of the assembled operator are
nonpositive and the diagonal dominates, so the operator is a symmetric
M-matrix and inherits inverse positivity (discrete maximum principle).

Quadrature weights are exact cell measures (cells adjacent to the boundary
absorb the boundary strip), so integrating the constant 1 reproduces the
domain measure exactly on rectangles and radial balls.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp


class GridConstructionError(ValueError):
    """A domain spec cannot be discretized as requested."""


class GridMismatchError(ValueError):
    """A field or measure was combined with a grid it does not belong to."""


def sphere_surface(n_dim: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (n_dim / 2.0) / math.gamma(n_dim / 2.0)


@dataclass(frozen=True)
class DiskRegion:
    """A disk, used as an inner region or as a potential parameter."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise GridConstructionError("disk region needs radius > 0")

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """|x - c| - radius: negative inside, zero on the circle."""
        d = np.hypot(pts[..., 0] - self.center[0], pts[..., 1] - self.center[1])
        return d - self.radius


@dataclass(frozen=True)
class DomainSpec:
    """Domain description: rectangle, disk, or radial profile of an N-ball."""

    kind: str
    bounds: tuple[float, float, float, float] | None = None
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    dimension: int = 2
    include_origin: bool = False
    inner_region: DiskRegion | None = None

    @staticmethod
    def rectangle(x0: float, x1: float, y0: float, y1: float,
                  inner_region: DiskRegion | None = None) -> "DomainSpec":
        return DomainSpec(kind="rectangle", bounds=(x0, x1, y0, y1),
                          inner_region=inner_region)

    @staticmethod
    def disk(center=(0.0, 0.0), radius: float = 1.0,
             inner_region: DiskRegion | None = None) -> "DomainSpec":
        return DomainSpec(kind="disk", center=tuple(center), radius=radius,
                          inner_region=inner_region)

    @staticmethod
    def radial_ball(dimension: int, radius: float = 1.0,
                    include_origin: bool = False) -> "DomainSpec":
        return DomainSpec(kind="radial_ball", radius=radius,
                          dimension=dimension, include_origin=include_origin)

    def validate(self) -> None:
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise GridConstructionError("rectangle needs x1 > x0 and y1 > y0")
        elif self.kind == "disk":
            if not self.radius > 0.0:
                raise GridConstructionError("disk needs radius > 0")
        elif self.kind == "radial_ball":
            if self.dimension < 2:
                raise GridConstructionError("radial ball needs dimension N >= 2")
            if not self.radius > 0.0:
                raise GridConstructionError("radial ball needs radius > 0")
            if self.inner_region is not None:
                raise GridConstructionError("inner regions are 2D only")
        else:
            raise GridConstructionError(f"unknown domain kind {self.kind!r}")
        if self.inner_region is not None:
            self._validate_inner()

    def _validate_inner(self) -> None:
        c, rho = self.inner_region.center, self.inner_region.radius
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.bounds
            inside = (x0 < c[0] - rho and c[0] + rho < x1
                      and y0 < c[1] - rho and c[1] + rho < y1)
        else:
            off = math.hypot(c[0] - self.center[0], c[1] - self.center[1])
            inside = off + rho < self.radius
        if not inside:
            raise GridConstructionError(
                "inner region closure must lie strictly inside the domain")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "rectangle":
            d["bounds"] = list(self.bounds)
        elif self.kind == "disk":
            d["center"] = list(self.center)
            d["radius"] = self.radius
        else:
            d["dimension"] = self.dimension
            d["radius"] = self.radius
            d["include_origin"] = self.include_origin
        if self.inner_region is not None:
            d["inner_region"] = {"center": list(self.inner_region.center),
                                 "radius": self.inner_region.radius}
        return d


@dataclass
class Grid:
    """Discretized domain: interior nodes, quadrature, and edge structure.

    ``edge_coeff`` stores the finite-difference coupling 1/h^2 of each
    interior edge and ``edge_measure`` the measure of the dual cell the edge
    represents, so that the assembled operator has off-diagonal entries
    ``-edge_coeff * edge_measure`` and the quadratic form x^T L x approximates
    the Dirichlet energy.  Edges to the (zero) boundary extension are kept in
    the ``boundary_*`` arrays and only contribute to the diagonal.
    """

    spec: DomainSpec
    h: float
    mode: str                    # "cartesian" or "radial"
    dimension: int
    coords: np.ndarray           # (n, 2) or (n, 1)
    lattice: np.ndarray          # integer lattice index per node
    quad_weight: np.ndarray      # (n,)
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_coeff: np.ndarray
    edge_measure: np.ndarray
    boundary_node: np.ndarray
    boundary_coeff: np.ndarray
    boundary_measure: np.ndarray
    laplacian: sp.csr_matrix = dataclass_field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def edge_weight(self) -> np.ndarray:
        """Stiffness weight of each interior edge (coeff times measure)."""
        return self.edge_coeff * self.edge_measure

    @property
    def boundary_weight(self) -> np.ndarray:
        return self.boundary_coeff * self.boundary_measure

    def nearest_node(self, point) -> int:
        """Index of the node closest to ``point`` (deterministic tie-break)."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.size != self.coords.shape[1]:
            raise GridMismatchError("point dimensionality does not match grid")
        d2 = np.sum((self.coords - p[None, :]) ** 2, axis=1)
        return int(np.argmin(d2))


@dataclass
class ScalarField:
    """One real value per interior node of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise GridMismatchError(
                f"field length {self.values.shape} does not match "
                f"{self.grid.n_nodes} grid nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar fields must be finite everywhere")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class DiscreteMeasure:
    """Datum mu: a (possibly signed) density plus point atoms at nodes."""

    grid: Grid
    density: np.ndarray | None = None
    atoms: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.density is not None:
            self.density = np.asarray(self.density, dtype=float)
            if self.density.shape != (self.grid.n_nodes,):
                raise GridMismatchError("density length does not match grid")
            if not np.all(np.isfinite(self.density)):
                raise ValueError("measure density must be finite")
        atoms = []
        for node, mass in self.atoms:
            node = int(node)
            if not 0 <= node < self.grid.n_nodes:
                raise ValueError(f"atom node {node} outside grid")
            if not np.isfinite(mass):
                raise ValueError("atom mass must be finite")
            atoms.append((node, float(mass)))
        self.atoms = tuple(atoms)

    def is_nonnegative(self) -> bool:
        ok = all(mass >= 0.0 for _, mass in self.atoms)
        if self.density is not None:
            ok = ok and bool(np.all(self.density >= 0.0))
        return ok

    def restricted(self, mask: np.ndarray) -> "DiscreteMeasure":
        """The measure mu restricted to the node set ``mask``."""
        dens = None if self.density is None else np.where(mask, self.density, 0.0)
        atoms = tuple((n, m) for n, m in self.atoms if mask[n])
        return DiscreteMeasure(self.grid, dens, atoms)


def check_same_grid(grid: Grid, *fields) -> None:
    for f in fields:
        if f.grid is not grid:
            raise GridMismatchError("field belongs to a different grid")


def make_field(grid: Grid, values) -> ScalarField:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(grid.n_nodes, float(values))
    return ScalarField(grid, values)


def density_measure(grid: Grid, values) -> DiscreteMeasure:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(grid.n_nodes, float(values))
    return DiscreteMeasure(grid, density=values)


def atom_measure(grid: Grid, atoms) -> DiscreteMeasure:
    return DiscreteMeasure(grid, density=None, atoms=tuple(atoms))


# ---------------------------------------------------------------------------
# construction


def _axis_positions(a: float, b: float, h: float):
    """Interior positions a+h, ..., b-h; h must tile [a, b]."""
    n_cells = (b - a) / h
    n = int(round(n_cells))
    if abs(n_cells - n) > 1e-8 * max(1.0, n):
        raise GridConstructionError(
            f"mesh width {h} does not tile the side [{a}, {b}]")
    if n < 4:
        raise GridConstructionError(
            "mesh too coarse: need at least 3 interior nodes per axis")
    return a + h * np.arange(1, n), n


def _build_cartesian(spec: DomainSpec, h: float) -> Grid:
    if spec.kind == "rectangle":
        x0, x1, y0, y1 = spec.bounds
        xs, nx = _axis_positions(x0, x1, h)
        ys, ny = _axis_positions(y0, y1, h)
        ij = [(i, j) for i in range(1, nx) for j in range(1, ny)]
        coords = np.array([(xs[i - 1], ys[j - 1]) for i, j in ij])
        # axis weights: interior cells h, boundary-adjacent cells 3h/2
        def axis_w(k, n):
            w = h
            if k == 1:
                w += h / 2.0
            if k == n - 1:
                w += h / 2.0
            return w
        quad = np.array([axis_w(i, nx) * axis_w(j, ny) for i, j in ij])
    elif spec.kind == "disk":
        cx, cy = spec.center
        R = spec.radius
        m = int(math.floor(R / h)) + 1
        ij = []
        for i in range(-m, m + 1):
            for j in range(-m, m + 1):
                if (i * h) ** 2 + (j * h) ** 2 < R * R * (1.0 - 1e-12):
                    ij.append((i, j))
        if len(ij) < 9:
            raise GridConstructionError("mesh too coarse for this disk")
        coords = np.array([(cx + i * h, cy + j * h) for i, j in ij])
        quad = np.full(len(ij), h * h)
    else:  # pragma: no cover - guarded by validate()
        raise GridConstructionError(spec.kind)

    lattice = np.array(ij, dtype=np.int64)
    index = {tuple(p): k for k, p in enumerate(ij)}
    coeff = 1.0 / (h * h)
    cell = h * h

    ei, ej = [], []
    b_node, n_missing = [], np.zeros(len(ij), dtype=np.int64)
    for k, (i, j) in enumerate(ij):
        for di, dj in ((1, 0), (0, 1)):
            nb = index.get((i + di, j + dj))
            if nb is None:
                n_missing[k] += 1
            else:
                ei.append(k)
                ej.append(nb)
        for di, dj in ((-1, 0), (0, -1)):
            if (i + di, j + dj) not in index:
                n_missing[k] += 1

    ei = np.array(ei, dtype=np.int64)
    ej = np.array(ej, dtype=np.int64)
    b_node = np.flatnonzero(n_missing)
    b_mult = n_missing[b_node].astype(float)
    return Grid(
        spec=spec, h=h, mode="cartesian", dimension=2,
        coords=coords, lattice=lattice, quad_weight=quad,
        edge_i=ei, edge_j=ej,
        edge_coeff=np.full(ei.size, coeff),
        edge_measure=np.full(ei.size, cell),
        boundary_node=b_node,
        boundary_coeff=np.full(b_node.size, coeff) * b_mult,
        boundary_measure=np.full(b_node.size, cell),
    )


def _build_radial(spec: DomainSpec, h: float) -> Grid:
    R, n_dim = spec.radius, spec.dimension
    m_cells = R / h
    m = int(round(m_cells))
    if abs(m_cells - m) > 1e-8 * max(1.0, m):
        raise GridConstructionError(f"mesh width {h} does not tile [0, {R}]")
    if m < 4:
        raise GridConstructionError(
            "mesh too coarse: need at least 3 interior radial nodes")
    omega = sphere_surface(n_dim)
    j0 = 0 if spec.include_origin else 1
    js = np.arange(j0, m)
    r = js * h

    # exact shell measures; first cell extends to 0, last cell to R
    lo = np.maximum(r - h / 2.0, 0.0)
    hi = np.minimum(r + h / 2.0, R)
    lo[0] = 0.0
    hi[-1] = R
    quad = omega * (hi ** n_dim - lo ** n_dim) / n_dim

    # consecutive edges; flux through r = 0 (or the innermost half cell) is zero
    ei = np.arange(0, r.size - 1)
    ej = ei + 1
    mid = (r[ei] + r[ej]) / 2.0
    coeff = np.full(ei.size, 1.0 / (h * h))
    measure = omega * mid ** (n_dim - 1) * h

    b_node = np.array([r.size - 1], dtype=np.int64)
    b_mid = R - h / 2.0
    return Grid(
        spec=spec, h=h, mode="radial", dimension=n_dim,
        coords=r[:, None], lattice=js[:, None].astype(np.int64),
        quad_weight=quad,
        edge_i=ei, edge_j=ej, edge_coeff=coeff, edge_measure=measure,
        boundary_node=b_node,
        boundary_coeff=np.array([1.0 / (h * h)]),
        boundary_measure=np.array([omega * b_mid ** (n_dim - 1) * h]),
    )


def _assemble_laplacian(g: Grid) -> sp.csr_matrix:
    n = g.n_nodes
    w = g.edge_weight
    diag = np.zeros(n)
    np.add.at(diag, g.edge_i, w)
    np.add.at(diag, g.edge_j, w)
    np.add.at(diag, g.boundary_node, g.boundary_weight)
    rows = np.concatenate([g.edge_i, g.edge_j, np.arange(n)])
    cols = np.concatenate([g.edge_j, g.edge_i, np.arange(n)])
    vals = np.concatenate([-w, -w, diag])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def build_grid(spec: DomainSpec, h: float) -> Grid:
    """Discretize ``spec`` with mesh width ``h``.

    Node ordering is deterministic: lexicographic in the lattice index for
    Cartesian grids, increasing radius for radial grids.
    """
    if not h > 0.0:
        raise GridConstructionError("mesh width h must be positive")
    spec.validate()
    if spec.kind in ("rectangle", "disk"):
        g = _build_cartesian(spec, h)
    else:
        g = _build_radial(spec, h)
    g.laplacian = _assemble_laplacian(g)
    return g


# ---------------------------------------------------------------------------
# quadrature and bilinear forms


def integrate(grid: Grid, f: ScalarField) -> float:
    check_same_grid(grid, f)
    return float(np.dot(grid.quad_weight, f.values))


def inner(grid: Grid, f: ScalarField, g: ScalarField,
          weight: ScalarField | None = None) -> float:
    check_same_grid(grid, f, g)
    w = grid.quad_weight
    if weight is not None:
        check_same_grid(grid, weight)
        w = w * weight.values
    return float(np.einsum("i,i,i->", w, f.values, g.values))


def gradient_energy(grid: Grid, f: ScalarField) -> float:
    """Dirichlet energy sum over edges, including edges to the zero extension.

    Equals f^T L f for the assembled operator.
    """
    check_same_grid(grid, f)
    v = f.values
    dif = v[grid.edge_i] - v[grid.edge_j]
    e = float(np.dot(grid.edge_weight, dif * dif))
    vb = v[grid.boundary_node]
    return e + float(np.dot(grid.boundary_weight, vb * vb))


def pair_measure(grid: Grid, f: ScalarField, nu: DiscreteMeasure) -> float:
    """The pairing of a field with a measure: density quadrature plus atoms."""
    check_same_grid(grid, f)
    if nu.grid is not grid:
        raise GridMismatchError("measure belongs to a different grid")
    total = 0.0
    if nu.density is not None:
        total += float(np.einsum("i,i,i->", grid.quad_weight, f.values, nu.density))
    for node, mass in nu.atoms:
        total += f.values[node] * mass
    return total


# ---------------------------------------------------------------------------
# export

def grid_descriptor(grid: Grid) -> dict:
    return {"spec": grid.spec.to_dict(), "h": grid.h,
            "node_count": grid.n_nodes}


def grid_descriptor_json(grid: Grid) -> str:
    return json.dumps(grid_descriptor(grid), sort_keys=True, indent=2) + "\n"


def field_csv_lines(f: ScalarField) -> list[str]:
    """CSV rows "x,y,value" (2D) or "r,value" (radial), header included."""
    g = f.grid
    if g.mode == "radial":
        lines = ["r,value"]
        for r, v in zip(g.coords[:, 0], f.values):
            lines.append(f"{r!r},{v!r}")
    else:
        lines = ["x,y,value"]
        for (x, y), v in zip(g.coords, f.values):
            lines.append(f"{x!r},{y!r},{v!r}")
    return lines
