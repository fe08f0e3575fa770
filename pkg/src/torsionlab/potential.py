"""Singular potential catalog and its cell-averaged, clipped evaluation.

Nodewise values are means of the potential over midpoint subsamples of the
node's cell, with each sample clipped to [-V_cap, V_cap].  A refinement
ladder (m, 3m, 9m subsamples per axis) detects cells whose average diverges:
non-integrable positive layers saturate the clip and the node becomes a
"hard" barrier node, excised from all linear systems, while integrable
singularities stay finite.  Positive and negative parts are probed
separately so that a positive blow-up always produces a barrier even when a
negative singularity shares the cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import DiskRegion, Grid, GridMismatchError, ScalarField, make_field

DEFAULT_CLIP = 1.0e12
_GROWTH = 1.3   # per-ladder-level growth factor that flags divergence


@dataclass(frozen=True)
class PotentialSpec:
    """Symbolic potential family with parameters."""

    kind: str
    point: tuple[float, float] | None = None
    strength: float = 1.0
    alpha: float = 1.0
    omega: DiskRegion | None = None
    terms: tuple = ()

    @staticmethod
    def constant(c: float) -> "PotentialSpec":
        return PotentialSpec(kind="constant", strength=float(c))

    @staticmethod
    def hardy_point(a, kappa: float = 1.0) -> "PotentialSpec":
        if kappa < 0:
            raise ValueError("hardy_point needs kappa >= 0")
        return PotentialSpec(kind="hardy_point", point=tuple(a), strength=kappa)

    @staticmethod
    def inverse_power_axis(alpha: float) -> "PotentialSpec":
        if alpha < 0:
            raise ValueError("inverse_power_axis needs alpha >= 0")
        return PotentialSpec(kind="inverse_power_axis", alpha=float(alpha))

    @staticmethod
    def inverse_power_radial(beta: float) -> "PotentialSpec":
        if beta < 0:
            raise ValueError("inverse_power_radial needs beta >= 0")
        return PotentialSpec(kind="inverse_power_radial", alpha=float(beta))

    @staticmethod
    def dist_boundary_sq(omega: DiskRegion) -> "PotentialSpec":
        return PotentialSpec(kind="dist_boundary_sq", omega=omega)

    @staticmethod
    def dist_set_sq(omega: DiskRegion) -> "PotentialSpec":
        return PotentialSpec(kind="dist_set_sq", omega=omega)

    @staticmethod
    def brezis_marcus(omega: DiskRegion) -> "PotentialSpec":
        return PotentialSpec(kind="brezis_marcus", omega=omega)

    @staticmethod
    def hardy_signed(alpha: float) -> "PotentialSpec":
        if not alpha > 0:
            raise ValueError("hardy_signed needs alpha > 0")
        return PotentialSpec(kind="hardy_signed", alpha=float(alpha))

    @staticmethod
    def sum_of(a: "PotentialSpec", b: "PotentialSpec") -> "PotentialSpec":
        return PotentialSpec(kind="sum", terms=(a, b))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["value"] = self.strength
        elif self.kind == "hardy_point":
            d["point"] = list(self.point)
            d["kappa"] = self.strength
        elif self.kind in ("inverse_power_axis", "hardy_signed"):
            d["alpha"] = self.alpha
        elif self.kind == "inverse_power_radial":
            d["beta"] = self.alpha
        elif self.kind in ("dist_boundary_sq", "dist_set_sq", "brezis_marcus"):
            d["omega"] = {"center": list(self.omega.center),
                          "radius": self.omega.radius}
        elif self.kind == "sum":
            d["terms"] = [t.to_dict() for t in self.terms]
        return d


@dataclass
class SplitPotential:
    """Clipped cell averages split into V+ and V-, plus the hard-node mask."""

    grid: Grid
    vplus: np.ndarray
    vminus: np.ndarray
    hard_mask: np.ndarray
    clip: float
    subsamples: int

    def __post_init__(self):
        n = self.grid.n_nodes
        for arr in (self.vplus, self.vminus):
            if arr.shape != (n,):
                raise GridMismatchError("split potential length mismatch")
        if np.any(self.vplus < 0) or np.any(self.vminus < 0):
            raise ValueError("split parts must be nonnegative")
        if np.any((self.vplus > 0) & (self.vminus > 0)):
            raise ValueError("vplus * vminus must vanish nodewise")
        if np.any(self.hard_mask & (self.vplus < self.clip)):
            raise ValueError("hard nodes must sit at the clip value")

    @property
    def signed(self) -> np.ndarray:
        return self.vplus - self.vminus

    def vplus_field(self) -> ScalarField:
        return make_field(self.grid, self.vplus)


def zero_potential(grid: Grid) -> SplitPotential:
    n = grid.n_nodes
    return SplitPotential(grid, np.zeros(n), np.zeros(n),
                          np.zeros(n, dtype=bool), DEFAULT_CLIP, 1)


# ---------------------------------------------------------------------------
# raw sampling

def _require_cartesian(spec, grid):
    if grid.mode != "cartesian":
        raise ValueError(f"potential {spec.kind!r} needs a 2D Cartesian grid")


def raw_values(spec: PotentialSpec, grid: Grid, pts: np.ndarray) -> np.ndarray:
    """Pointwise potential values; may contain +/-inf at singular points."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if spec.kind == "constant":
            return np.full(pts.shape[:-1], spec.strength)
        if spec.kind == "hardy_point":
            if grid.mode == "radial":
                if spec.point is not None and any(c != 0.0 for c in spec.point):
                    raise ValueError("radial hardy_point must sit at the origin")
                r2 = pts[..., 0] ** 2
            else:
                a = spec.point
                r2 = (pts[..., 0] - a[0]) ** 2 + (pts[..., 1] - a[1]) ** 2
            return spec.strength / r2
        if spec.kind == "inverse_power_axis":
            _require_cartesian(spec, grid)
            return np.abs(pts[..., 0]) ** (-spec.alpha)
        if spec.kind == "inverse_power_radial":
            if grid.mode == "radial":
                r = pts[..., 0]
            else:
                r = np.hypot(pts[..., 0], pts[..., 1])
            return r ** (-spec.alpha)
        if spec.kind == "dist_boundary_sq":
            _require_cartesian(spec, grid)
            d = np.abs(spec.omega.signed_distance(pts))
            return d ** -2.0
        if spec.kind == "dist_set_sq":
            _require_cartesian(spec, grid)
            d = np.maximum(spec.omega.signed_distance(pts), 0.0)
            return d ** -2.0
        if spec.kind == "brezis_marcus":
            _require_cartesian(spec, grid)
            s = spec.omega.signed_distance(pts)
            return np.sign(s + (s == 0.0)) / (4.0 * s * s)
        if spec.kind == "hardy_signed":
            if grid.mode != "radial":
                raise ValueError("hardy_signed needs a radial grid")
            n_dim, a = grid.dimension, spec.alpha
            if not 0.0 < a < n_dim - 2:
                raise ValueError("hardy_signed needs 0 < alpha < N - 2")
            r = pts[..., 0]
            return -a * (n_dim - 2 - a) / (r * r * (1.0 - r ** a))
        if spec.kind == "sum":
            vals = raw_values(spec.terms[0], grid, pts) \
                + raw_values(spec.terms[1], grid, pts)
            return vals
        raise ValueError(f"unknown potential kind {spec.kind!r}")


def _cell_points(grid: Grid, m: int) -> np.ndarray:
    """Midpoint subsample points of every node cell: (n, m^dim, dim)."""
    offs = ((np.arange(m) + 0.5) / m - 0.5) * grid.h
    if grid.mode == "radial":
        return grid.coords[:, None, :] + offs[None, :, None]
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    shifts = np.stack([ox.ravel(), oy.ravel()], axis=-1)
    return grid.coords[:, None, :] + shifts[None, :, :]


def _level_means(spec, grid, m, clip, nodes=None):
    """Clipped positive/negative means and inf flags for each node cell."""
    pts = _cell_points(grid, m)
    if nodes is not None:
        pts = pts[nodes]
    v = raw_values(spec, grid, pts)
    if np.any(np.isnan(v)):
        raise ValueError("potential produced NaN (conflicting infinities)")
    pos = np.clip(v, 0.0, clip)
    neg = np.clip(-v, 0.0, clip)
    return (pos.mean(axis=-1), neg.mean(axis=-1),
            np.any(v == np.inf, axis=-1), np.any(v == -np.inf, axis=-1))


def _divergent(spec, grid, m, clip, mean1, mean2, side):
    """Third ladder level for candidate nodes; True where growth persists."""
    grew = (mean1 > 0) & (mean2 >= _GROWTH * mean1)
    out = np.zeros(mean1.shape, dtype=bool)
    cand = np.flatnonzero(grew)
    if cand.size == 0:
        return out
    p3, n3, ip3, in3 = _level_means(spec, grid, 9 * m, clip, nodes=cand)
    mean3 = p3 if side == "pos" else n3
    inf3 = ip3 if side == "pos" else in3
    out[cand] = inf3 | (mean3 >= _GROWTH * mean2[cand])
    return out


def evaluate(spec: PotentialSpec, grid: Grid, subsamples: int = 3,
             clip: float = DEFAULT_CLIP) -> SplitPotential:
    """Cell-averaged clipped evaluation of ``spec`` on ``grid``.

    Returns the V+/V- split; nodes whose positive part saturates the clip
    form the hard mask.
    """
    m = int(subsamples)
    if m < 1 or m % 2 == 0:
        raise ValueError("subsamples must be odd and >= 1")
    if not clip > 0:
        raise ValueError("clip must be positive")

    p1, n1, ip1, in1 = _level_means(spec, grid, m, clip)
    p2, n2, ip2, in2 = _level_means(spec, grid, 3 * m, clip)
    pos_sat = ip1 | ip2 | _divergent(spec, grid, m, clip, p1, p2, "pos")
    neg_sat = in1 | in2 | _divergent(spec, grid, m, clip, n1, n2, "neg")

    signed = p1 - n1
    vplus = np.where(signed > 0, signed, 0.0)
    vminus = np.where(signed < 0, -signed, 0.0)
    # positive saturation wins: the barrier comes from V+ alone
    vplus[pos_sat] = clip
    vminus[pos_sat] = 0.0
    neg_only = neg_sat & ~pos_sat
    vminus[neg_only] = clip
    vplus[neg_only] = 0.0
    hard = pos_sat | (vplus >= clip)
    vplus[hard] = clip
    vminus[hard] = 0.0
    return SplitPotential(grid, vplus, vminus, hard, clip, m)


# ---------------------------------------------------------------------------
# truncations

def truncate_plus(f: ScalarField, n: float) -> ScalarField:
    """T_n for nonnegative fields: nodewise min with the level n."""
    if n < 0:
        raise ValueError("truncation level must be >= 0")
    return make_field(f.grid, np.minimum(f.values, float(n)))


def truncate_signed(f: ScalarField, k: float) -> ScalarField:
    """T_k(s) = min(max(s, -k), k) nodewise."""
    if k < 0:
        raise ValueError("truncation level must be >= 0")
    return make_field(f.grid, np.clip(f.values, -float(k), float(k)))


def truncate_array(values: np.ndarray, level: float) -> np.ndarray:
    return np.clip(values, -float(level), float(level))


# ---------------------------------------------------------------------------
# Kato modulus eta(delta)

def _abs_cell_averages(spec, grid, subsamples, clip) -> np.ndarray:
    split = evaluate(spec, grid, subsamples=subsamples, clip=clip)
    return split.vplus + split.vminus


def _kato_radial(absv: np.ndarray, grid: Grid, delta: float) -> float:
    # shells: the kernel integral of |x-y|^{-1} over the part of the sphere
    # of radius r within distance delta of a point at radius s is
    # (2 pi r / s) (min(s+r, delta) - |s-r|)^+, exact for N = 3
    r = grid.coords[:, 0]
    s = r[:, None]
    rr = r[None, :]
    tmax = np.minimum(s + rr, delta)
    tmin = np.abs(s - rr)
    cap = 2.0 * math.pi * rr / s * np.maximum(tmax - tmin, 0.0)
    etas = cap @ (absv * grid.h)
    return float(np.max(etas))


def _kato_planar(absv: np.ndarray, grid: Grid, delta: float) -> float:
    # kernel log(2 delta / t); own-cell kernel integrated on an even midpoint
    # subgrid (no sample hits t = 0)
    h = grid.h
    offs = ((np.arange(40) + 0.5) / 40 - 0.5) * h
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    t_self = np.hypot(ox, oy).ravel()
    self_kernel = float(np.mean(np.log(2.0 * delta / t_self))) * h * h

    coords = grid.coords
    n = coords.shape[0]
    best = -np.inf
    chunk = max(1, int(2.0e6 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d = np.hypot(coords[start:stop, None, 0] - coords[None, :, 0],
                     coords[start:stop, None, 1] - coords[None, :, 1])
        with np.errstate(divide="ignore"):
            ker = np.where((d > 0) & (d <= delta), np.log(2.0 * delta / d), 0.0)
        etas = ker @ (absv * h * h)
        etas += absv[start:stop] * self_kernel
        best = max(best, float(np.max(etas)))
    return best


def kato_eta(spec: PotentialSpec, grid: Grid, delta: float,
             subsamples: int = 3, clip: float = DEFAULT_CLIP,
             _absv: np.ndarray | None = None) -> float:
    """Singular-kernel modulus sup_x of the kernel quadrature over B_delta(x).

    Radial grids use the exact spherical-cap kernel reduction (N = 3 only);
    2D grids use the logarithmic kernel log(2 delta / |x-y|).
    """
    if delta < grid.h:
        raise ValueError("unresolved radius: delta must be >= h")
    absv = _abs_cell_averages(spec, grid, subsamples, clip) if _absv is None else _absv
    if grid.mode == "radial":
        if grid.dimension != 3:
            raise ValueError("radial Kato modulus implemented for N = 3 only")
        return _kato_radial(absv, grid, delta)
    return _kato_planar(absv, grid, delta)


@dataclass
class KatoReport:
    deltas: tuple[float, ...]
    etas: tuple[float, ...]
    vanishing: bool
    decay_factor: float

    def csv_lines(self) -> list[str]:
        lines = ["delta,eta"]
        for d, e in zip(self.deltas, self.etas):
            lines.append(f"{d!r},{e!r}")
        return lines


def kato_report(spec: PotentialSpec, grid: Grid, deltas,
                subsamples: int = 3, clip: float = DEFAULT_CLIP,
                decay_factor: float = 0.2, workers: int = 1) -> KatoReport:
    """eta over a decreasing delta sweep plus a vanishing/not verdict."""
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValueError("empty delta sequence")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta sequence must be strictly decreasing")
    if any(d < 2.0 * grid.h for d in deltas):
        raise ValueError("unresolved radius: every delta must be >= 2h")
    absv = _abs_cell_averages(spec, grid, subsamples, clip)

    def one(d):
        return kato_eta(spec, grid, d, subsamples, clip, _absv=absv)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            etas = list(ex.map(one, deltas))
    else:
        etas = [one(d) for d in deltas]
    vanishing = etas[-1] < decay_factor * etas[0]
    return KatoReport(tuple(deltas), tuple(etas), bool(vanishing), decay_factor)
