"""Quadratic minimizations and eigenproblems for -Laplace + V.

The operator matrix is the grid stiffness matrix plus the quadrature-weighted
potential diagonal, restricted to active nodes (hard barrier nodes and nodes
outside an optional region mask are excised and their fields pinned to 0).
With V+ only the matrix is a symmetric M-matrix, hence positive definite and
inverse positive; solutions of nonnegative data are nonnegative nodewise.

Linear systems are solved by Jacobi-preconditioned conjugate gradients with a
deterministic zero (or warm) start.  The smallest generalized eigenvalue of
(A, M) is found by bisection on positive definiteness of A - sigma M followed
by inverse iteration with the factored shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (DiscreteMeasure, Grid, GridMismatchError, ScalarField,
                   check_same_grid, integrate, make_field, pair_measure)
from .potential import SplitPotential, zero_potential


class SolverError(RuntimeError):
    """A linear or eigenvalue solve did not reach its tolerance."""


_SOLVE_COUNT = 0
_CG_ITERATIONS = 0


def reset_work_counters() -> None:
    global _SOLVE_COUNT, _CG_ITERATIONS
    _SOLVE_COUNT = 0
    _CG_ITERATIONS = 0


def work_counters() -> dict:
    return {"linear_solves": _SOLVE_COUNT, "cg_iterations": _CG_ITERATIONS}


@dataclass
class SchroedingerOperator:
    """-Laplace + V on the active nodes of a grid."""

    grid: Grid
    split: SplitPotential
    signed: bool
    active: np.ndarray            # bool, full grid length
    matrix: sp.csr_matrix         # restricted to active nodes
    index_of: np.ndarray          # grid node -> active index, -1 if excised

    @property
    def n_active(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def quad_active(self) -> np.ndarray:
        return self.grid.quad_weight[self.active]

    def embed(self, restricted: np.ndarray) -> ScalarField:
        full = np.zeros(self.grid.n_nodes)
        full[self.active] = restricted
        return make_field(self.grid, full)

    def restrict(self, f: ScalarField) -> np.ndarray:
        check_same_grid(self.grid, f)
        return f.values[self.active]

    def form_value(self, f: ScalarField) -> float:
        """The quadratic form: gradient energy plus the potential term."""
        x = self.restrict(f)
        return float(x @ (self.matrix @ x))


def make_operator(grid: Grid, split: SplitPotential | None = None, *,
                  signed: bool = False,
                  mask: np.ndarray | None = None) -> SchroedingerOperator:
    if split is None:
        split = zero_potential(grid)
    if split.grid is not grid:
        raise GridMismatchError("potential evaluated on a different grid")
    active = ~split.hard_mask
    if mask is not None:
        active = active & np.asarray(mask, dtype=bool)
    if not np.any(active):
        raise ValueError("operator has no active nodes")
    idx = np.flatnonzero(active)
    v = split.signed if signed else split.vplus
    diag = grid.quad_weight[idx] * v[idx]
    a = grid.laplacian[idx][:, idx] + sp.diags(diag)
    index_of = np.full(grid.n_nodes, -1, dtype=np.int64)
    index_of[idx] = np.arange(idx.size)
    return SchroedingerOperator(grid=grid, split=split, signed=signed,
                                active=active, matrix=a.tocsr(),
                                index_of=index_of)


# ---------------------------------------------------------------------------
# linear solves

def _cg_solve(a: sp.csr_matrix, b: np.ndarray, x0: np.ndarray | None = None,
              rtol: float = 1.0e-12) -> np.ndarray:
    global _SOLVE_COUNT, _CG_ITERATIONS
    _SOLVE_COUNT += 1
    if not np.any(b) and x0 is None:
        return np.zeros_like(b)
    d = a.diagonal()
    precond = spla.LinearOperator(a.shape, matvec=lambda v: v / d)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    x, info = spla.cg(a, b, x0=x0, rtol=rtol, atol=0.0,
                      maxiter=40 * a.shape[0] + 200, M=precond, callback=count)
    _CG_ITERATIONS += iters
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(b - a @ x) / bnorm if bnorm > 0 else 0.0
    if info != 0 or res > 1.0e-10:
        # stagnation fallback: one direct factorization
        x = spla.splu(a.tocsc()).solve(b)
        res = np.linalg.norm(b - a @ x) / bnorm if bnorm > 0 else 0.0
        if res > 1.0e-10:
            raise SolverError(f"linear solve stalled at relative residual {res:.3e}")
    return x


def _rhs_vector(op: SchroedingerOperator, datum) -> np.ndarray:
    grid = op.grid
    if isinstance(datum, DiscreteMeasure):
        if datum.grid is not grid:
            raise GridMismatchError("measure belongs to a different grid")
        rhs = np.zeros(op.n_active)
        if datum.density is not None:
            rhs += op.quad_active * datum.density[op.active]
        for node, mass in datum.atoms:
            k = op.index_of[node]
            if k < 0:
                raise ValueError(f"atom at node {node} sits on an excised node")
            rhs[k] += mass
        return rhs
    if isinstance(datum, ScalarField):
        check_same_grid(grid, datum)
        return op.quad_active * datum.values[op.active]
    values = np.asarray(datum, dtype=float)
    if values.ndim == 0:
        return op.quad_active * float(values)
    if values.shape != (grid.n_nodes,):
        raise GridMismatchError("datum length does not match grid")
    return op.quad_active * values[op.active]


def minimize_energy(op: SchroedingerOperator, datum,
                    x0: ScalarField | None = None) -> ScalarField:
    """Unique minimizer of 1/2 a(u, u) - <datum, u> for the V+ operator.

    Solves (L + diag(q V+)) u = rhs to relative residual <= 1e-10; hard nodes
    report 0.  Nonnegative data yield nonnegative solutions (M-matrix).
    """
    if op.signed:
        raise ValueError("minimize_energy needs the V+ (definite) operator")
    start = None if x0 is None else op.restrict(x0)
    x = _cg_solve(op.matrix, _rhs_vector(op, datum), x0=start)
    return op.embed(x)


def solve_signed(op: SchroedingerOperator, datum) -> ScalarField:
    """Solve the signed restricted system; requires a definite operator."""
    if not op.signed:
        return minimize_energy(op, datum)
    if not is_positive_definite(op.matrix):
        raise SolverError("signed operator is not positive definite")
    x = _cg_solve(op.matrix, _rhs_vector(op, datum))
    return op.embed(x)


def torsion(op: SchroedingerOperator) -> ScalarField:
    """Minimizer for constant datum 1; its zero set drives the decomposition."""
    return minimize_energy(op, 1.0)


def green_column(op: SchroedingerOperator, node: int) -> ScalarField:
    """Solution with a unit atom at ``node``; symmetric in node pairs."""
    if op.index_of[node] < 0:
        raise ValueError(f"node {node} is excised or outside the region")
    return minimize_energy(op, DiscreteMeasure(op.grid, atoms=((node, 1.0),)))


def green_columns(op: SchroedingerOperator, nodes, workers: int = 1):
    nodes = list(nodes)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda x: green_column(op, x), nodes))
    return [green_column(op, x) for x in nodes]


# ---------------------------------------------------------------------------
# identity checks

def _rel_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def reciprocity_check(op: SchroedingerOperator, f: ScalarField,
                      g: ScalarField) -> float:
    """Relative gap between <zeta_g, f> and <zeta_f, g>."""
    zf = minimize_energy(op, f)
    zg = minimize_energy(op, g)
    lhs = integrate(op.grid, make_field(op.grid, zg.values * f.values))
    rhs = integrate(op.grid, make_field(op.grid, zf.values * g.values))
    return _rel_gap(lhs, rhs)


def representation_check(op: SchroedingerOperator, nu: DiscreteMeasure,
                         sample_nodes, workers: int = 1) -> float:
    """Worst relative gap of u(x) against the Green-column pairing at x."""
    u = minimize_energy(op, nu)
    scale = float(np.max(np.abs(u.values))) or 1.0
    worst = 0.0
    columns = green_columns(op, sample_nodes, workers=workers)
    for node, g in zip(sample_nodes, columns):
        predicted = pair_measure(op.grid, g, nu)
        worst = max(worst, abs(u.values[node] - predicted) / scale)
    return worst


def ground_state_identity(op: SchroedingerOperator, u: ScalarField,
                          xi: ScalarField) -> tuple[float, float]:
    """Two sides of the discrete ground-state transform.

    lhs = xi^T A xi; rhs = sum_j (A u)_j xi_j^2 / u_j plus the edge sum
    sum w u_i u_j (xi_i/u_i - xi_j/u_j)^2.  Exact up to roundoff whenever
    u > 0 on every node where xi != 0.
    """
    grid = op.grid
    check_same_grid(grid, u, xi)
    if np.any((np.abs(xi.values) > 0) & ~op.active):
        raise ValueError("xi must vanish on excised nodes")
    uv = u.values[op.active]
    xv = xi.values[op.active]
    if np.any((uv <= 0) & (np.abs(xv) > 0)):
        raise ValueError("u must be strictly positive wherever xi is nonzero")

    lhs = float(xv @ (op.matrix @ xv))
    au = op.matrix @ uv
    with np.errstate(divide="ignore", invalid="ignore"):
        node_term = np.where(np.abs(xv) > 0, au * xv * xv / uv, 0.0)
        ratio = np.where(uv > 0, xv / np.where(uv > 0, uv, 1.0), 0.0)
    node_sum = float(np.sum(node_term))

    keep = op.active[grid.edge_i] & op.active[grid.edge_j]
    ei = op.index_of[grid.edge_i[keep]]
    ej = op.index_of[grid.edge_j[keep]]
    w = grid.edge_weight[keep]
    edge_sum = float(np.sum(w * uv[ei] * uv[ej] * (ratio[ei] - ratio[ej]) ** 2))
    return lhs, node_sum + edge_sum


def ground_state_lower_bound(op: SchroedingerOperator, u: ScalarField,
                             f_values: np.ndarray, xi: ScalarField) -> float:
    """xi^T A xi minus sum q f xi^2 / u, nonnegative when A u = q f, f >= 0."""
    lhs, _ = ground_state_identity(op, u, xi)
    uv = u.values[op.active]
    xv = xi.values[op.active]
    fv = f_values[op.active]
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(np.abs(xv) > 0,
                        op.quad_active * fv * xv * xv / uv, 0.0)
    return lhs - float(np.sum(term))


# ---------------------------------------------------------------------------
# smallest generalized eigenvalue

def is_positive_definite(a: sp.spmatrix) -> bool:
    """Cholesky-style probe: factor in symmetric mode, inspect pivot signs."""
    n = a.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if n <= 400:
        try:
            np.linalg.cholesky(a.toarray())
            return True
        except np.linalg.LinAlgError:
            return False
    try:
        lu = spla.splu(a.tocsc(), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    except RuntimeError:
        return False
    d = lu.U.diagonal()
    return bool(np.all(np.isfinite(d)) and np.all(d > 0))


@dataclass
class SpectralResult:
    lambda1: float
    eigenfield: ScalarField
    iterations: int
    residual: float

    @property
    def eigenfield_abs(self) -> ScalarField:
        return make_field(self.eigenfield.grid, np.abs(self.eigenfield.values))

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "iterations": self.iterations,
                "residual": self.residual}


def rayleigh_lambda1(op: SchroedingerOperator,
                     weight: ScalarField | np.ndarray | None = None,
                     mask: np.ndarray | None = None,
                     bracket_rel: float = 1.0e-6,
                     max_refine: int = 60) -> SpectralResult:
    """Smallest eigenvalue of the quadratic form against the weighted mass.

    Shifted inverse iteration: the shift is bracketed from below by bisection
    on positive definiteness of A - sigma M, then the factored shift drives
    inverse iteration.  The eigenfield is reported sign-normalized with
    nonnegative mean and unit (unweighted) L2 quadrature norm.
    """
    grid = op.grid
    sel_full = op.active.copy()
    if mask is not None:
        sel_full &= np.asarray(mask, dtype=bool)
    if not np.any(sel_full):
        raise ValueError("empty region mask")
    sub = op.index_of[np.flatnonzero(sel_full)]
    a = op.matrix[sub][:, sub].tocsr()
    q = grid.quad_weight[sel_full]
    if weight is None:
        wv = np.ones(q.size)
    else:
        wv = weight.values if isinstance(weight, ScalarField) else np.asarray(weight)
        wv = wv[sel_full]
        if np.any(wv <= 0):
            raise ValueError("weight must be strictly positive on the region")
    m = q * wv

    # Gershgorin lower bound for M^{-1/2} A M^{-1/2}
    absa = abs(a)
    row_abs = np.asarray(absa.sum(axis=1)).ravel()
    dg = a.diagonal()
    off = row_abs - np.abs(dg)
    lo = float(np.min((dg - off) / m))
    ones = np.ones(a.shape[0])
    hi = float(ones @ (a @ ones)) / float(ones @ (m * ones))
    scale = max(1.0, abs(lo), abs(hi))
    lo -= 1.0e-9 * scale

    mdiag = sp.diags(m)
    if not is_positive_definite((a - lo * mdiag).tocsc()):
        raise SolverError("failed to bracket the spectrum from below")
    while hi - lo > bracket_rel * scale:
        mid = 0.5 * (lo + hi)
        if is_positive_definite((a - mid * mdiag).tocsc()):
            lo = mid
        else:
            hi = mid

    sigma = lo
    shifted = (a - sigma * mdiag).tocsc()
    factor = spla.splu(shifted)
    x = ones / math.sqrt(float(ones @ (m * ones)))
    lam = float(x @ (a @ x))
    iterations = 0
    for _ in range(max_refine):
        iterations += 1
        y = factor.solve(m * x)
        ny = math.sqrt(float(y @ (m * y)))
        if ny == 0.0 or not np.all(np.isfinite(y)):
            break
        x = y / ny
        new_lam = float(x @ (a @ x))
        if abs(new_lam - lam) <= 1.0e-13 * max(1.0, abs(new_lam)):
            lam = new_lam
            break
        lam = new_lam
    res_vec = a @ x - lam * (m * x)
    residual = float(np.linalg.norm(res_vec))
    denom = float(np.linalg.norm(a @ x)) + abs(lam) * float(np.linalg.norm(m * x))
    rel_res = residual / denom if denom > 0 else 0.0
    if rel_res > 1.0e-7:
        raise SolverError(f"eigen solve stalled at relative residual {rel_res:.3e}")

    full = np.zeros(grid.n_nodes)
    full[sel_full] = x
    if float(np.dot(grid.quad_weight, full)) < 0.0:
        full = -full
    norm = math.sqrt(float(np.dot(grid.quad_weight, full * full)))
    if norm > 0:
        full /= norm
    return SpectralResult(lambda1=lam, eigenfield=make_field(grid, full),
                          iterations=iterations, residual=residual)


# ---------------------------------------------------------------------------
# nonnegative-supersolution equivalence check

@dataclass
class SupersolutionReport:
    """Both directions of the supersolution / nonnegative-form equivalence."""

    lambda1: float
    eigenfield: ScalarField
    mu: ScalarField                 # datum of the witness, lambda1 * u
    form_nonneg: bool
    witness_ok: bool

    @property
    def verdicts_agree(self) -> bool:
        return self.form_nonneg == self.witness_ok

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "form_nonneg": self.form_nonneg,
                "witness_ok": self.witness_ok,
                "verdicts_agree": self.verdicts_agree}


def certify_witness(op: SchroedingerOperator, u: ScalarField,
                    mu_values: np.ndarray, probes: int = 8,
                    seed: int = 0, tol: float = 1.0e-8) -> bool:
    """Given A u = q mu with u > 0 and mu >= 0, certify the form is >= 0.

    Uses the ground-state transform bound on random probe fields; the
    inequality is structural, so failures indicate invalid witness data.
    """
    uv = u.values[op.active]
    if np.any(uv <= 0):
        return False
    if np.any(mu_values[op.active] < -tol * (1.0 + np.abs(mu_values).max())):
        return False
    rng = np.random.default_rng(seed)
    scale_a = float(np.abs(op.matrix.diagonal()).max())
    for _ in range(probes):
        xi_vals = np.zeros(op.grid.n_nodes)
        xi_vals[op.active] = rng.standard_normal(op.n_active)
        xi = make_field(op.grid, xi_vals)
        gap = ground_state_lower_bound(op, u, mu_values, xi)
        if gap < -tol * scale_a:
            return False
    return True


def supersolution_equivalence_check(op: SchroedingerOperator,
                                    tol: float = 1.0e-10) -> SupersolutionReport:
    """lambda1 >= 0 iff a positive supersolution with nonnegative datum exists.

    On the witness side the eigenfield u with datum mu = lambda1 u is emitted
    and, when admissible, certified through the ground-state transform.
    """
    if np.any(op.split.hard_mask):
        raise ValueError("equivalence check expects a potential without hard nodes")
    spec_res = rayleigh_lambda1(op)
    lam = spec_res.lambda1
    u = spec_res.eigenfield_abs
    mu = make_field(op.grid, lam * u.values)
    scale = max(1.0, abs(lam))
    form_nonneg = lam >= -tol * scale
    witness_ok = False
    if lam >= -tol * scale:
        witness_ok = certify_witness(op, u, mu.values)
    return SupersolutionReport(lambda1=lam, eigenfield=u, mu=mu,
                               form_nonneg=form_nonneg, witness_ok=witness_ok)


aap_check = supersolution_equivalence_check
