"""Zero-set extraction, component labeling, localization, and defect mass.

The zero set S of the torsion function is detected in two tiers: hard
barrier nodes (clip saturation of V+) are authoritative, and a relative
threshold with an h^2/4 floor catches soft zero sets resolved to one cell.
Components of the complement are 4-connected pieces of the node graph minus
S, labeled deterministically by smallest node index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridMismatchError, ScalarField, check_same_grid, make_field


@dataclass
class DecompositionResult:
    """Node partition into the zero set S and labeled components."""

    grid: Grid
    s_nodes: np.ndarray           # bool mask
    labels: np.ndarray            # 0 on S, 1..K on components
    component_count: int

    def mask(self, i: int) -> np.ndarray:
        if not 1 <= i <= self.component_count:
            raise ValueError(f"component id {i} out of range")
        return self.labels == i

    @property
    def masks(self) -> list[np.ndarray]:
        return [self.mask(i) for i in range(1, self.component_count + 1)]

    def component_of_node(self, node: int) -> int:
        return int(self.labels[node])

    def component_containing(self, point) -> int:
        node = self.grid.nearest_node(point)
        lab = int(self.labels[node])
        if lab == 0:
            raise ValueError("point falls on the zero set S")
        return lab

    def summary(self) -> dict:
        sizes = [int(np.count_nonzero(self.labels == i))
                 for i in range(1, self.component_count + 1)]
        return {"component_count": self.component_count,
                "S_size": int(np.count_nonzero(self.s_nodes)),
                "component_sizes": sizes}


def detect_S(zeta1: ScalarField, hard_mask: np.ndarray,
             theta_rel: float = 1.0e-3) -> np.ndarray:
    """Zero-set mask: hard nodes plus the torsion-threshold tier.

    Threshold is max(theta_rel * max zeta1, h^2 / 4); the floor flags zero
    sets resolved to a single cell (a slab of width w has torsion ~ w^2/8).
    """
    if not 0.0 < theta_rel < 1.0:
        raise ValueError("theta_rel must lie in (0, 1)")
    grid = zeta1.grid
    hard_mask = np.asarray(hard_mask, dtype=bool)
    if hard_mask.shape != (grid.n_nodes,):
        raise GridMismatchError("hard mask length does not match grid")
    thresh = max(theta_rel * float(np.max(zeta1.values)), grid.h ** 2 / 4.0)
    s = hard_mask | (zeta1.values <= thresh)
    if np.all(s):
        raise ValueError("empty complement: every node lies in the zero set")
    return s


def _adjacency(grid: Grid):
    nbr = [[] for _ in range(grid.n_nodes)]
    for i, j in zip(grid.edge_i, grid.edge_j):
        nbr[i].append(int(j))
        nbr[j].append(int(i))
    return nbr


def components(grid: Grid, s_nodes: np.ndarray) -> DecompositionResult:
    """Label 4-connected components of the active graph minus S.

    Deterministic: components are numbered by their smallest node index.
    """
    s_nodes = np.asarray(s_nodes, dtype=bool)
    if s_nodes.shape != (grid.n_nodes,):
        raise GridMismatchError("zero-set mask length does not match grid")
    nbr = _adjacency(grid)
    labels = np.zeros(grid.n_nodes, dtype=np.int64)
    current = 0
    for start in range(grid.n_nodes):
        if s_nodes[start] or labels[start] != 0:
            continue
        current += 1
        stack = [start]
        labels[start] = current
        while stack:
            k = stack.pop()
            for nb in nbr[k]:
                if not s_nodes[nb] and labels[nb] == 0:
                    labels[nb] = current
                    stack.append(nb)
    return DecompositionResult(grid=grid, s_nodes=s_nodes, labels=labels,
                               component_count=current)


def decompose(grid: Grid, zeta1: ScalarField, hard_mask: np.ndarray,
              theta_rel: float = 1.0e-3) -> DecompositionResult:
    return components(grid, detect_S(zeta1, hard_mask, theta_rel))


def cutoff(u: ScalarField, decomposition: DecompositionResult,
           i: int) -> ScalarField:
    """u restricted to component D_i, zero elsewhere."""
    check_same_grid(decomposition.grid, u)
    return make_field(u.grid, np.where(decomposition.mask(i), u.values, 0.0))


@dataclass
class MaxPrincipleReport:
    status: str                   # "holds", "violated", or "not_applicable"
    min_value: float
    argmin_node: int

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def strong_max_principle_check(u: ScalarField, nu, decomposition,
                               i: int, tol: float = 0.0) -> MaxPrincipleReport:
    """If nu >= 0 on D_i and the mass of u on D_i is positive, u > 0 there.

    Reports "not_applicable" when the hypotheses fail (for instance a datum
    supported in another component, which decouples across hard barriers).
    """
    grid = decomposition.grid
    check_same_grid(grid, u)
    mask = decomposition.mask(i)
    dens_ok = True
    if nu is not None:
        if nu.density is not None and np.any(nu.density[mask] < 0):
            dens_ok = False
        if any(mass < 0 and mask[node] for node, mass in nu.atoms):
            dens_ok = False
    mass_u = float(np.dot(grid.quad_weight[mask], u.values[mask]))
    sub = np.flatnonzero(mask)
    k = int(np.argmin(u.values[sub]))
    mn = float(u.values[sub][k])
    if not dens_ok or mass_u <= tol:
        return MaxPrincipleReport("not_applicable", mn, int(sub[k]))
    status = "holds" if mn > tol else "violated"
    return MaxPrincipleReport(status, mn, int(sub[k]))


# ---------------------------------------------------------------------------
# defect mass carried by a codimension-one zero set

@dataclass
class DefectEstimate:
    """Interface defect: one-sided quotient densities along S and their mass."""

    tau_mass: float
    positions: np.ndarray         # interface node coordinates
    densities: np.ndarray         # per-node sums of one-sided quotients
    interface: str                # "column", "radial", or "empty"
    trace: tuple = ()             # optional (h, tau_mass) refinement pairs

    @property
    def applicable(self) -> bool:
        return self.interface != "empty"


def _interface_kind(grid: Grid, s_idx: np.ndarray) -> str:
    if grid.mode == "radial":
        js = np.sort(grid.lattice[s_idx, 0])
        if js.size > 3 or (js.size > 1 and np.any(np.diff(js) != 1)):
            raise ValueError("defect estimator requires codimension-one S")
        return "radial"
    cols = np.unique(grid.lattice[s_idx, 0])
    if cols.size <= 3 and (cols.size <= 1 or np.all(np.diff(np.sort(cols)) == 1)):
        return "column"
    raise ValueError("defect estimator requires codimension-one S")


def defect_estimate(grid: Grid, zeta1: ScalarField,
                    decomposition: DecompositionResult) -> DefectEstimate:
    """Defect density along S from one-sided normal difference quotients.

    Each S node contributes the sum of zeta1(neighbour)/h over its active
    neighbours; the mass integrates those densities along the interface.
    Only thin hyperplane-type (2D column), radial-annulus, and 1D interfaces
    are supported.
    """
    check_same_grid(decomposition.grid, zeta1)
    s = decomposition.s_nodes
    s_idx = np.flatnonzero(s)
    if s_idx.size == 0:
        return DefectEstimate(0.0, np.empty((0,)), np.empty(0), "empty")
    kind = _interface_kind(grid, s_idx)

    nbr = _adjacency(grid)
    h = grid.h
    dens = np.zeros(s_idx.size)
    for row, k in enumerate(s_idx):
        for nb in nbr[k]:
            if not s[nb]:
                dens[row] += zeta1.values[nb] / h
    if kind == "column":
        measure = np.full(s_idx.size, h)
        positions = grid.coords[s_idx, 1]
    else:
        from .grid import sphere_surface
        r = grid.coords[s_idx, 0]
        measure = sphere_surface(grid.dimension) * r ** (grid.dimension - 1)
        positions = r
    # count each interface slice once: with a thick S only boundary nodes
    # carry nonzero quotients, so summing densities over all S nodes is safe
    tau_mass = float(np.dot(dens, measure))
    order = np.argsort(positions, kind="stable")
    return DefectEstimate(tau_mass=tau_mass, positions=positions[order],
                          densities=dens[order], interface=kind)


def defect_scan(build, h_values) -> DefectEstimate:
    """Refinement trace of tau_mass: ``build(h)`` returns a DefectEstimate."""
    trace = []
    last = None
    for h in h_values:
        last = build(h)
        trace.append((float(h), last.tau_mass))
    return DefectEstimate(tau_mass=last.tau_mass, positions=last.positions,
                          densities=last.densities, interface=last.interface,
                          trace=tuple(trace))
