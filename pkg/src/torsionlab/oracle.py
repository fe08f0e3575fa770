"""Closed-form reference objects used as ground truth by tests.

The radial Hardy family on the unit ball,

    u_a(r) = r^{-a} - 1,
    V_a(r) = -a (N-2-a) / (r^2 (1 - r^a)),
    f_{a,b} = [b(N-2-b)(1-r^a) - a(N-2-a)(1-r^b)] / (r^{b+2} (1-r^a)),

satisfies -Laplace u_b + V_a u_b = f_{a,b} with f_{a,b} > 0 away from the
origin when (N-2)/2 <= b < a < N-2.  Oracles are evaluated in radial
coordinates only and checked by independent finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solveh_banded

from .grid import sphere_surface


def u_alpha(r, alpha: float):
    """Profile r^{-alpha} - 1 on (0, 1]; +inf at the origin."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("u_alpha is defined on 0 < r <= 1")
    with np.errstate(divide="ignore"):
        out = r ** (-alpha) - 1.0
    return out if out.ndim else float(out)


def v_alpha(r, n_dim: int, alpha: float):
    """Negative radial potential -alpha (N-2-alpha) / (r^2 (1 - r^alpha))."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("v_alpha is defined on 0 < r < 1")
    out = -alpha * (n_dim - 2 - alpha) / (r * r * (1.0 - r ** alpha))
    return out if out.ndim else float(out)


def _check_family(n_dim: int, alpha: float, beta: float) -> None:
    if n_dim < 3:
        raise ValueError("the Hardy family needs N >= 3")
    if not ((n_dim - 2) / 2.0 <= beta < alpha < n_dim - 2):
        raise ValueError("need (N-2)/2 <= beta < alpha < N-2")


def f_alpha_beta(r, n_dim: int, alpha: float, beta: float):
    """Source of -Laplace u_beta + V_alpha u_beta; positive off the origin."""
    _check_family(n_dim, alpha, beta)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("f_alpha_beta is defined on 0 < r < 1")
    a, b = alpha, beta
    num = b * (n_dim - 2 - b) * (1.0 - r ** a) - a * (n_dim - 2 - a) * (1.0 - r ** b)
    out = num / (r ** (b + 2.0) * (1.0 - r ** a))
    return out if out.ndim else float(out)


def f_alpha_beta_lower(r, n_dim: int, alpha: float, beta: float):
    """Displayed lower bound a(N-2-a)(r^b - r^a) / (r^{b+2}(1 - r^a))."""
    _check_family(n_dim, alpha, beta)
    r = np.asarray(r, dtype=float)
    a, b = alpha, beta
    out = a * (n_dim - 2 - a) * (r ** b - r ** a) / (r ** (b + 2.0) * (1.0 - r ** a))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HardyFamily:
    """Parameter triple for the radial Hardy profiles."""

    n_dim: int
    alpha: float
    beta: float

    def __post_init__(self):
        _check_family(self.n_dim, self.alpha, self.beta)

    def u(self, r):
        return u_alpha(r, self.beta)

    def potential(self, r):
        return v_alpha(r, self.n_dim, self.alpha)

    def source(self, r):
        return f_alpha_beta(r, self.n_dim, self.alpha, self.beta)

    def source_lower_bound(self, r):
        return f_alpha_beta_lower(r, self.n_dim, self.alpha, self.beta)


def radial_residual(n_dim: int, alpha: float, beta: float, h: float,
                    window: tuple[float, float] = (0.1, 0.9)) -> float:
    """Sup of |(-Laplace_h + V_alpha) u_beta - f_{alpha,beta}| on the window.

    Independent conservative three-point stencil on r_j = j h; the residual
    decreases at second order away from the endpoints.  ``beta == alpha``
    checks the homogeneous identity (source 0).
    """
    if beta == alpha:
        _check_family(n_dim, alpha + 1.0e-9, beta)  # range check only
    else:
        _check_family(n_dim, alpha, beta)
    m = int(round(1.0 / h))
    r = np.arange(1, m) * h
    lo, hi = window
    if np.count_nonzero((r >= lo) & (r <= hi)) < 100:
        raise ValueError("mesh too coarse: fewer than 100 nodes in the window")
    u = u_alpha(r, beta)
    rp = r + h / 2.0
    rm = r - h / 2.0
    pw = n_dim - 1
    lap = np.full_like(r, np.nan)
    # interior nodes only; endpoints lack a full stencil
    lap[1:-1] = (rp[1:-1] ** pw * (u[1:-1] - u[2:]) +
                 rm[1:-1] ** pw * (u[1:-1] - u[:-2])) / (r[1:-1] ** pw * h * h)
    v = v_alpha(r, n_dim, alpha)
    if beta == alpha:
        src = np.zeros_like(r)
    else:
        src = f_alpha_beta(r, n_dim, alpha, beta)
    resid = lap + v * u - src
    sel = (r >= lo) & (r <= hi)
    return float(np.nanmax(np.abs(resid[sel])))


# ---------------------------------------------------------------------------
# torsion closed forms

def torsion_exact_ball(n_dim: int, radius: float, r):
    """(R^2 - r^2) / (2N), the V = 0 torsion profile of the N-ball."""
    r = np.asarray(r, dtype=float)
    out = (radius ** 2 - r ** 2) / (2.0 * n_dim)
    return out if out.ndim else float(out)


def torsion_exact_square(x, y, terms: int = 50):
    """Separable series for -Laplace u = 1 on the unit square, truncated."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = x * (1.0 - x) / 2.0
    for k in range(1, 2 * terms, 2):
        kp = k * math.pi
        out = out - (4.0 / (kp ** 3)) * np.sin(kp * x) \
            * np.cosh(kp * (y - 0.5)) / math.cosh(kp / 2.0)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# truncation energy scan at the critical exponent

@dataclass(frozen=True)
class EnergyScanEntry:
    k: float
    rho: float
    dirichlet: float
    potential: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.potential


def truncation_energy_scan(n_dim: int, alpha: float, ks) -> list[EnergyScanEntry]:
    """Energies of the truncated profiles T_k(u_alpha) on the unit ball.

    dirichlet(k) = alpha^2 Omega_N  int_{rho_k}^1 r^{N-3-2 alpha} dr  (exact),
    potential(k) = Omega_N int_0^1 V_alpha T_k(u_alpha)^2 r^{N-1} dr  (quadrature),
    with rho_k = (k+1)^{-1/alpha}.  At alpha = (N-2)/2 the two log-divergent
    parts cancel and the total stays bounded in k.
    """
    if not 0 < alpha < n_dim - 2:
        raise ValueError("need 0 < alpha < N - 2")
    omega = sphere_surface(n_dim)
    entries = []
    for k in ks:
        k = float(k)
        rho = (k + 1.0) ** (-1.0 / alpha)
        p = n_dim - 2.0 - 2.0 * alpha
        if abs(p) < 1.0e-14:
            dir_part = alpha ** 2 * omega * math.log(1.0 / rho)
        else:
            dir_part = alpha ** 2 * omega * (1.0 - rho ** p) / p

        c = alpha * (n_dim - 2.0 - alpha)

        def inner_integrand(r, k=k):
            return -c * k * k * r ** (n_dim - 3.0) / (1.0 - r ** alpha)

        def outer_integrand(r):
            # V u^2 = -c (1 - r^alpha) / r^{2 alpha + 2} * r^{N-1} reduced
            return -c * (1.0 - r ** alpha) * r ** (n_dim - 3.0 - 2.0 * alpha)

        pot_in, _ = quad(inner_integrand, 0.0, rho, limit=200)
        pot_out, _ = quad(outer_integrand, rho, 1.0, limit=200)
        entries.append(EnergyScanEntry(k=k, rho=rho, dirichlet=dir_part,
                                       potential=(pot_in + pot_out) * omega))
    return entries


# ---------------------------------------------------------------------------
# 1D interface defect oracle

@dataclass
class InterfaceOracle1D:
    h: float
    alpha: float
    tau: float
    u_left: float
    u_right: float


def defect_interface_1d(alpha: float, h: float,
                        half_width: float = 1.0) -> InterfaceOracle1D:
    """Fine-grid oracle for -u'' + u/|t|^alpha = 1 on (-L, L), u(+-L) = 0.

    The potential is cell-averaged in closed form; for alpha >= 1 the cell
    containing t = 0 has a divergent average and the node is pinned to 0.
    The defect of the interface is the sum of the two one-sided difference
    quotients u(+-h)/h.
    """
    if alpha < 1.0:
        raise ValueError("the interface oracle needs alpha >= 1 (hard cell)")
    m = int(round(half_width / h))
    t = (np.arange(-m + 1, m) * h)
    n = t.size
    center = m - 1
    assert abs(t[center]) < 1e-15

    def cell_avg(tt):
        lo, hi = abs(tt) - h / 2.0, abs(tt) + h / 2.0
        if alpha == 1.0:
            return (math.log(hi) - math.log(lo)) / h
        return (hi ** (1.0 - alpha) - lo ** (1.0 - alpha)) / ((1.0 - alpha) * h)

    v = np.array([np.inf if j == center else cell_avg(tt)
                  for j, tt in enumerate(t)])

    keep = np.ones(n, dtype=bool)
    keep[center] = False   # hard node: pinned to zero
    idx = np.flatnonzero(keep)
    nk = idx.size
    diag = 2.0 / h ** 2 + v[idx]
    upper = np.full(nk, -1.0 / h ** 2)
    # neighbours across the pinned node are decoupled
    cut = np.searchsorted(idx, center) - 1
    upper[cut] = 0.0
    ab = np.zeros((2, nk))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    u = solveh_banded(ab, np.ones(nk))
    full = np.zeros(n)
    full[idx] = u
    u_left = float(full[center - 1])
    u_right = float(full[center + 1])
    return InterfaceOracle1D(h=h, alpha=alpha, tau=(u_left + u_right) / h,
                             u_left=u_left, u_right=u_right)
