"""Monotone approximation scheme, comparison bound Q, and Poincare weights.

The scheme solves, at step n,

    (-Laplace + V+) u_n = T_{t_n}(mu) + T_{t_n}(V-) u_{n-1},   u_0 = 0,

with nondecreasing truncation levels t_n.  Inverse positivity of the V+
operator forces 0 <= u_n <= u_{n+1} nodewise, which the trace asserts at
every step.  The scheme limit feeds the weight construction

    w_i = min( Q(z_i) / max(u~, eps), w_cap )   on D_i,

whose validity is certified by a weighted Rayleigh bound >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (DiscreteMeasure, Grid, ScalarField, density_measure,
                   make_field)
from .potential import SplitPotential, truncate_array
from .decomposition import DecompositionResult
from .variational import (SchroedingerOperator, SpectralResult, is_positive_definite,
                          make_operator, minimize_energy, rayleigh_lambda1,
                          torsion, _cg_solve, _rhs_vector)


@dataclass(frozen=True)
class QFunction:
    """Comparison profile Q(t) = ((alpha-1)/(C alpha)) min(t^alpha, 1)."""

    alpha: float
    c: float

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError("Q needs alpha > 1")
        if not self.c > 0.0:
            raise ValueError("Q needs C > 0")

    @property
    def bound(self) -> float:
        return (self.alpha - 1.0) / (self.c * self.alpha)

    def __call__(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self.bound * np.minimum(t ** self.alpha, 1.0)


@dataclass
class IterationTrace:
    """Scheme iterates u_0 = 0, u_1, ..., with per-step diagnostics."""

    fields: list[ScalarField]
    increments: list[float]
    monotone_ok: list[bool]
    truncation_levels: list[float]
    converged: bool
    saturated: bool

    @property
    def limit(self) -> ScalarField:
        return self.fields[-1]

    @property
    def n_steps(self) -> int:
        return len(self.fields) - 1

    def csv_lines(self) -> list[str]:
        lines = ["n,sup_u,increment,monotone_ok"]
        for n in range(1, len(self.fields)):
            sup = float(np.max(self.fields[n].values)) if self.fields[n].values.size else 0.0
            lines.append(f"{n},{sup!r},{self.increments[n - 1]!r},"
                         f"{int(self.monotone_ok[n - 1])}")
        return lines


def _truncation_level(n: int, schedule: str) -> float:
    if schedule == "linear":
        return float(n)
    if schedule == "doubling":
        return float(2.0 ** (n - 1))
    raise ValueError(f"unknown truncation schedule {schedule!r}")


def monotone_scheme(grid: Grid, split: SplitPotential, mu: DiscreteMeasure,
                    n_max: int = 200, tol: float = 1.0e-8,
                    schedule: str = "linear",
                    require_saturation: bool = False,
                    upper_bound: ScalarField | None = None,
                    mono_tol: float = 1.0e-12) -> IterationTrace:
    """Run the truncated monotone iteration from u_0 = 0.

    Stops when the sup increment drops below ``tol`` times sup u_n (and, if
    ``require_saturation``, once the truncations are fully saturated) or at
    ``n_max``.  A monotonicity violation beyond ``mono_tol`` times the
    solution scale aborts: the M-matrix structure makes it impossible unless
    the solver or clipping is misconfigured.
    """
    if mu.grid is not grid:
        raise ValueError("datum lives on a different grid")
    if not mu.is_nonnegative():
        raise ValueError("monotone scheme needs a nonnegative datum")
    op = make_operator(grid, split, signed=False)
    vminus = split.vminus
    dens = mu.density if mu.density is not None else np.zeros(grid.n_nodes)
    sat_level = max(float(np.max(dens)), float(np.max(vminus)))

    u = make_field(grid, np.zeros(grid.n_nodes))
    fields = [u]
    increments, mono_flags, levels = [], [], []
    converged = False
    saturated = sat_level == 0.0
    for n in range(1, n_max + 1):
        t_n = _truncation_level(n, schedule)
        levels.append(t_n)
        rhs_dens = truncate_array(dens, t_n) \
            + truncate_array(vminus, t_n) * u.values
        step_mu = DiscreteMeasure(grid, density=rhs_dens, atoms=mu.atoms)
        u_next = minimize_energy(op, step_mu, x0=u)
        scale = max(float(np.max(np.abs(u_next.values))), 1.0e-300)
        drop = float(np.max(u.values - u_next.values))
        ok = drop <= mono_tol * scale
        mono_flags.append(ok)
        inc = float(np.max(np.abs(u_next.values - u.values)))
        increments.append(inc)
        fields.append(u_next)
        if not ok:
            raise RuntimeError(
                f"monotonicity violated by {drop:.3e} at step {n}: "
                "solver tolerance or clipping is misconfigured")
        u = u_next
        saturated = t_n >= sat_level
        sup = float(np.max(u.values))
        if inc <= tol * max(sup, 1.0e-300) and (saturated or not require_saturation):
            converged = True
            break

    trace = IterationTrace(fields=fields, increments=increments,
                           monotone_ok=mono_flags, truncation_levels=levels,
                           converged=converged, saturated=saturated)
    if upper_bound is not None:
        slack = 1.0e-8 * max(float(np.max(np.abs(upper_bound.values))), 1.0)
        for f in fields:
            if float(np.max(f.values - upper_bound.values)) > slack:
                raise RuntimeError("scheme iterate exceeded the supersolution bound")
    return trace


# ---------------------------------------------------------------------------
# calibration of the comparison profile Q

def calibrate_Q(grid: Grid, split: SplitPotential, alpha: float = 2.0,
                n_probes: int = 3, seed: int = 0, tol: float = 1.0e-8,
                max_exp: int = 64, min_exp: int = -20) -> QFunction:
    """Smallest power-of-two C such that u >= zeta_{Q(u)} on all probes.

    Probes are the torsion function and ``n_probes`` random-density
    solutions.  The inequality is monotone in C (larger C shrinks Q), so a
    bisection over exponents finds the smallest admissible power of two.
    """
    op = make_operator(grid, split, signed=False)
    probes = [torsion(op)]
    rng = np.random.default_rng(seed)
    for _ in range(n_probes):
        dens = rng.uniform(0.25, 1.0, size=grid.n_nodes)
        probes.append(minimize_energy(op, density_measure(grid, dens)))

    def admissible(c: float) -> bool:
        q = QFunction(alpha, c)
        for u in probes:
            zeta_q = minimize_energy(op, density_measure(grid, q(u.values)))
            slack = tol * max(float(np.max(u.values)), 1.0e-300)
            if float(np.min(u.values - zeta_q.values)) < -slack:
                return False
        return True

    if not admissible(2.0 ** max_exp):
        raise RuntimeError("Q calibration failed: no admissible C <= 2^64 "
                           "(degenerate grid)")
    lo, hi = min_exp, max_exp
    if admissible(2.0 ** lo):
        hi = lo
    while hi - lo > 0:
        mid = (lo + hi) // 2
        if admissible(2.0 ** mid):
            hi = mid
        else:
            lo = mid + 1
    q = QFunction(alpha, 2.0 ** hi)
    if not admissible(q.c):  # re-verify the returned profile
        raise RuntimeError("Q calibration inconsistent")
    return q


# ---------------------------------------------------------------------------
# weight construction with certification

@dataclass
class WeightResult:
    """Component weight w_i with its certification status."""

    component: int
    z: ScalarField                # solution with datum mu restricted to D_i
    u_tilde: ScalarField          # monotone-scheme limit with datum Q(z)
    w: ScalarField                # candidate weight, positive on D_i
    certified_lambda: float
    certified: bool
    certificate: ScalarField | None
    q_function: QFunction
    spectral: SpectralResult

    def to_dict(self) -> dict:
        return {"component": self.component,
                "certified_lambda": self.certified_lambda,
                "certified": self.certified,
                "C": self.q_function.c, "alpha": self.q_function.alpha}


def build_weight(grid: Grid, split: SplitPotential, mu: DiscreteMeasure,
                 q_function: QFunction, decomposition: DecompositionResult,
                 i: int, w_cap: float = 1.0e6, eps_rel: float = 1.0e-12,
                 n_max: int = 6000, tol: float = 1.0e-13,
                 cert_tol: float = 1.0e-6) -> WeightResult:
    """Construct and certify the positive weight on component D_i.

    z_i solves the V+ problem with datum mu restricted to D_i; the scheme
    limit u~ with datum Q(z_i) then bounds the admissible weight through
    w <= Q(z_i)/u~.  Certification computes the smallest weighted Rayleigh
    value of the signed form on D_i and requires it to reach 1 - cert_tol;
    a failure returns the negative-energy direction as certificate.
    """
    mask = decomposition.mask(i)
    mu_i = mu.restricted(mask)
    if not mu_i.is_nonnegative():
        raise ValueError("weight construction needs mu >= 0 on D_i")
    mass = 0.0
    if mu_i.density is not None:
        mass += float(np.dot(grid.quad_weight, mu_i.density))
    mass += sum(m for _, m in mu_i.atoms)
    if not mass > 0.0:
        raise ValueError("weight construction needs mu(D_i) > 0")

    op_plus = make_operator(grid, split, signed=False)
    z = minimize_energy(op_plus, mu_i)
    datum = density_measure(grid, q_function(z.values))
    trace = monotone_scheme(grid, split, datum, n_max=n_max, tol=tol,
                            schedule="doubling", require_saturation=True)
    u_tilde = trace.limit

    eps_u = eps_rel * max(float(np.max(u_tilde.values)), 1.0e-300)
    w_vals = np.zeros(grid.n_nodes)
    on = mask & op_plus.active
    w_vals[on] = np.minimum(q_function(z.values[on])
                            / np.maximum(u_tilde.values[on], eps_u), w_cap)
    w = make_field(grid, w_vals)

    op_signed = make_operator(grid, split, signed=True)
    spectral = rayleigh_lambda1(op_signed, weight=make_field(grid, np.where(on, w_vals, 1.0)),
                                mask=on)
    certified = spectral.lambda1 >= 1.0 - cert_tol
    certificate = None if certified else spectral.eigenfield
    return WeightResult(component=i, z=z, u_tilde=u_tilde, w=w,
                        certified_lambda=spectral.lambda1,
                        certified=certified, certificate=certificate,
                        q_function=q_function, spectral=spectral)


def minimize_theta(grid: Grid, split: SplitPotential,
                   decomposition: DecompositionResult, i: int,
                   w: ScalarField, h_datum: ScalarField) -> ScalarField:
    """Minimizer of the component energy 1/2 ||xi||_i^2 - int w h xi.

    Solves the signed system restricted to D_i; requires the restricted form
    to be definite (that is, a certified weight).  Nonnegative h gives a
    nonnegative minimizer (the restricted matrix is a Stieltjes matrix).
    """
    mask = decomposition.mask(i)
    op = make_operator(grid, split, signed=True, mask=mask)
    if not is_positive_definite(op.matrix):
        raise ValueError("restricted signed form is indefinite: certify a "
                         "weight before minimizing")
    wh = np.where(mask, w.values * h_datum.values, 0.0)
    if not np.all(np.isfinite(wh)):
        raise ValueError("datum has infinite weighted norm")
    x = _cg_solve(op.matrix, _rhs_vector(op, make_field(grid, wh)))
    return op.embed(x)


def supersolution_rigidity_check(grid: Grid, split: SplitPotential,
                                 decomposition: DecompositionResult, i: int,
                                 u: ScalarField, tol: float = 1.0e-8) -> bool:
    """With datum vanishing on a certified D_i, the solution vanishes there."""
    mask = decomposition.mask(i)
    scale = max(float(np.max(np.abs(u.values))), 0.0)
    if scale == 0.0:
        return True
    return float(np.max(np.abs(u.values[mask]))) <= tol * scale
