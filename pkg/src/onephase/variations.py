"""Inner variations of the phase energy and free-boundary surface forms.

For a compactly supported deformation field X with flow phi_t, the inner
variations are the t-derivatives of t -> I_eps(u(phi_t^{-1}(x))) at t = 0.
They are computed two independent ways: analytic formulas contracting
grad u with the exact derivatives of X, and finite differences of the
pulled-back energy.  At eps = 0 the potential term degenerates to the
indicator of the positive phase and gradients are taken one-sidedly
inside it, so the kink along the free boundary never enters a stencil.
The surface forms re-express the second variation of a classical
free-boundary solution as a bulk integral over the positive phase minus
a curvature-weighted integral along the extracted interface polyline.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .field import (
    ScalarField,
    VectorFieldSpec,
    evaluate,
    gradient,
    hessian,
    integrate,
    jacobian,
    max_norm,
    pullback,
    sample,
    support_box,
)
from .potentials import F_eps, ReactionTerm, f_eps
from .solver import energy

__all__ = [
    "NotClassicalSolutionError",
    "VariationReport",
    "InterfaceCurve",
    "lie_derivative",
    "first_inner_variation",
    "second_inner_variation",
    "inner_variation_fd",
    "classical_second_variation",
    "extract_interface",
    "surface_second_variation",
    "cjk_form",
    "variation_report",
    "report_to_json",
    "report_from_json",
    "save_curve",
    "load_curve",
]

# Offsets (in grid spacings) at which interface quantities are probed
# inside the positive phase before linear extrapolation back to the
# curve; both stay clear of the one-cell band of polluted stencils.
_PROBE_NEAR = 3.0
_PROBE_FAR = 5.0
# A vertex whose extrapolated curvature exceeds this many inverse grid
# spacings is below the resolvable radius and flagged singular.
_SINGULAR_CURVATURE = 10.0


class NotClassicalSolutionError(ValueError):
    """The field fails the |grad u| = 1 trace check on the interface."""


@dataclasses.dataclass(frozen=True)
class VariationReport:
    """Matched analytic and finite-difference variation values.

    Attributes:
        first_analytic: first inner variation by the contraction formula.
        second_analytic: second inner variation by the contraction formula.
        first_fd: first derivative of the pulled-back energy.
        second_fd: second derivative of the pulled-back energy.
        dt: step used for the finite differences.
        classical_second: quadratic form 2*int(|grad phi|^2 + f_eps'(u)phi^2)
            at phi = L_X u, or None when eps = 0.
        surface_second: bulk-minus-curve form of the second variation, or
            None when no interface curve was supplied.
    """

    first_analytic: float
    second_analytic: float
    first_fd: float
    second_fd: float
    dt: float
    classical_second: float | None = None
    surface_second: float | None = None

    def __post_init__(self) -> None:
        for name in ("first_analytic", "second_analytic", "first_fd", "second_fd"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        for name in ("classical_second", "surface_second"):
            val = getattr(self, name)
            if val is not None and not np.isfinite(val):
                raise ValueError(f"{name} must be finite when present")


@dataclasses.dataclass(frozen=True, eq=False)
class InterfaceCurve:
    """Ordered polyline along a level set, with per-vertex geometry.

    Attributes:
        points: vertex coordinates, shape (n, 2), consecutive vertices
            joined by straight edges (plus a closing edge when closed).
        normals: unit normals -grad u/|grad u|, pointing out of the
            positive phase, shape (n, 2).
        curvature: div(grad u/|grad u|) extrapolated to each vertex.
        singular: vertices whose curvature exceeds the grid resolution
            cutoff; curve quadratures skip them.
        closed: whether the polyline is a loop.
    """

    points: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    singular: np.ndarray
    closed: bool

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        nus = np.asarray(self.normals, dtype=float).reshape(-1, 2)
        kap = np.asarray(self.curvature, dtype=float).reshape(-1)
        sng = np.asarray(self.singular, dtype=bool).reshape(-1)
        if not (len(pts) == len(nus) == len(kap) == len(sng)):
            raise ValueError("per-vertex arrays disagree in length")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(kap))):
            raise ValueError("curve data must be finite")
        if len(nus) and np.max(np.abs(np.linalg.norm(nus, axis=1) - 1.0)) > 1e-9:
            raise ValueError("normals must be unit vectors")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nus)
        object.__setattr__(self, "curvature", kap)
        object.__setattr__(self, "singular", sng)

    def __len__(self) -> int:
        return len(self.points)


def _require_interior_support(u: ScalarField, spec: VectorFieldSpec) -> None:
    if spec.dim != u.grid.dim:
        raise ValueError(f"X has dim {spec.dim}, field has dim {u.grid.dim}")
    lo, hi = support_box(spec)
    glo, ghi = u.grid.origin, u.grid.hi
    if any(a <= b for a, b in zip(lo, glo)) or any(a >= b for a, b in zip(hi, ghi)):
        raise ValueError("support of X must lie strictly inside the grid domain")


def _shift(a: np.ndarray, ax: int, k: int, fill) -> np.ndarray:
    """Array of neighbor values a[.. i+k ..], padded with fill at the edge."""
    if k == 0:
        return a
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        src[ax], dst[ax] = slice(k, None), slice(0, -k)
    else:
        src[ax], dst[ax] = slice(0, k), slice(-k, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _phase_gradient(values: np.ndarray, h: float, mask: np.ndarray) -> np.ndarray:
    """Gradient restricted to a phase: stencils never cross the mask edge.

    Centered where both neighbors share the phase, second-order one-sided
    where only one side does, first-order when the phase is two nodes
    thin, zero on isolated nodes and outside the mask.
    """
    dim = values.ndim
    out = np.zeros((dim,) + values.shape)
    for ax in range(dim):
        vp, vm = _shift(values, ax, 1, 0.0), _shift(values, ax, -1, 0.0)
        vpp, vmm = _shift(values, ax, 2, 0.0), _shift(values, ax, -2, 0.0)
        mp, mm = _shift(mask, ax, 1, False), _shift(mask, ax, -1, False)
        mpp, mmm = _shift(mask, ax, 2, False), _shift(mask, ax, -2, False)
        d = np.where(
            mp & mm,
            (vp - vm) / (2.0 * h),
            np.where(
                mp & mpp,
                (-3.0 * values + 4.0 * vp - vpp) / (2.0 * h),
                np.where(
                    mp,
                    (vp - values) / h,
                    np.where(
                        mm & mmm,
                        (3.0 * values - 4.0 * vm + vmm) / (2.0 * h),
                        np.where(mm, (values - vm) / h, 0.0),
                    ),
                ),
            ),
        )
        out[ax] = np.where(mask, d, 0.0)
    return out


def _energy_gradient(u: ScalarField, eps: float) -> np.ndarray:
    if eps == 0.0:
        return _phase_gradient(u.values, u.grid.h, u.values > 0.0)
    return gradient(u)


def lie_derivative(u: ScalarField, spec: VectorFieldSpec) -> ScalarField:
    """Derivative of u along X: node-wise <grad u, X>.

    Args:
        u: field to differentiate.
        spec: deformation field on the same dimension.

    Returns:
        ScalarField on the grid of u.
    """
    if spec.dim != u.grid.dim:
        raise ValueError(f"X has dim {spec.dim}, field has dim {u.grid.dim}")
    g = gradient(u)
    xv = evaluate(spec, u.grid.nodes()).reshape(u.grid.shape + (u.grid.dim,))
    vals = sum(g[a] * xv[..., a] for a in range(u.grid.dim))
    return ScalarField(grid=u.grid, values=vals)


def first_inner_variation(
    u: ScalarField, spec: VectorFieldSpec, term: ReactionTerm, eps: float
) -> float:
    """d/dt at t=0 of the energy of the deformed competitor u(phi_t^{-1}).

    Evaluates integral of (|grad u|^2 + F_eps(u)) div X - 2 u_i u_j d_j X^i
    with exact X-derivatives and quadrature in u.

    Args:
        u: field, any smoothness (eps = 0 admits kinked fields).
        spec: deformation field, supported strictly inside the domain.
        term: reaction term.
        eps: nonnegative scale; 0 selects the indicator potential.

    Returns:
        The first inner variation.
    """
    _require_interior_support(u, spec)
    grid = u.grid
    g = _energy_gradient(u, eps)
    e = np.sum(g * g, axis=0) + F_eps(term, eps, u.values)
    jac = jacobian(spec, grid.nodes()).reshape(grid.shape + (grid.dim, grid.dim))
    div = np.einsum("...ii->...", jac)
    quad = np.einsum("i...,j...,...ij->...", g, g, jac)
    return integrate(ScalarField(grid=grid, values=e * div - 2.0 * quad))


def second_inner_variation(
    u: ScalarField, spec: VectorFieldSpec, term: ReactionTerm, eps: float
) -> float:
    """d^2/dt^2 at t=0 of the energy of the deformed competitor.

    The integrand contracts grad u with X and its first two derivatives:
    e div(X div X) plus 2 div X (L_X inverse-metric)(du, du) plus
    (L_X^2 inverse-metric)(du, du), all X-derivatives analytic.

    Args (as first_inner_variation).

    Returns:
        The second inner variation.
    """
    _require_interior_support(u, spec)
    grid = u.grid
    g = _energy_gradient(u, eps)
    e = np.sum(g * g, axis=0) + F_eps(term, eps, u.values)
    pts = grid.nodes()
    shp = grid.shape
    d = grid.dim
    xv = evaluate(spec, pts).reshape(shp + (d,))
    jac = jacobian(spec, pts).reshape(shp + (d, d))
    hes = hessian(spec, pts).reshape(shp + (d, d, d))
    div = np.einsum("...ii->...", jac)
    graddiv = np.einsum("...iik->...k", hes)
    q1 = np.einsum("i...,j...,...ij->...", g, g, jac)
    q2 = np.einsum("i...,j...,...k,...ijk->...", g, g, xv, hes)
    r3 = np.einsum("i...,j...,...kj,...ik->...", g, g, jac, jac) + np.einsum(
        "i...,j...,...jk,...ik->...", g, g, jac, jac
    )
    dens = (
        e * (np.einsum("...k,...k->...", xv, graddiv) + div**2)
        - 4.0 * div * q1
        - 2.0 * q2
        + 2.0 * r3
    )
    return integrate(ScalarField(grid=grid, values=dens))


def inner_variation_fd(
    u: ScalarField,
    spec: VectorFieldSpec,
    term: ReactionTerm,
    eps: float,
    dt: float | None = None,
    n_steps: int = 16,
) -> tuple[float, float]:
    """Finite-difference oracle for both inner variations.

    Evaluates g(t) = I_eps(u(phi_{-t})) at the five points t in
    {-2dt, ..., 2dt} and returns the 5-point central first and second
    derivatives at 0, each accurate to O(dt^4).  Pullbacks use quintic
    sampling: as the flowed points sweep grid cells, the interpolant's
    knot kinks enter g, and only a C^4 interpolant keeps that roughness
    below the dt^4 truncation term that the stencil is supposed to see.

    Args:
        u: field to deform.
        spec: deformation field, supported strictly inside the domain.
        term: reaction term.
        eps: nonnegative scale.
        dt: differencing step; None picks 1e-2 * support width / max |X|.
        n_steps: RK4 substeps per unit dt, so the five pullbacks share one
            step size.  Reusing a single map keeps the integrator error a
            smooth function of t instead of five unrelated perturbations.

    Returns:
        (first, second) derivative estimates; the step actually used is
        recoverable from the default rule or the caller's dt.
    """
    _require_interior_support(u, spec)
    if dt is None:
        dt = default_fd_step(spec)
    elif not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    vals = [
        energy(
            pullback(u, spec, k * dt, max(abs(k), 1) * n_steps, method="quintic"),
            term,
            eps,
        )
        for k in (-2, -1, 0, 1, 2)
    ]
    first = (vals[0] - 8.0 * vals[1] + 8.0 * vals[3] - vals[4]) / (12.0 * dt)
    second = (
        -vals[0] + 16.0 * vals[1] - 30.0 * vals[2] + 16.0 * vals[3] - vals[4]
    ) / (12.0 * dt**2)
    return first, second


def default_fd_step(spec: VectorFieldSpec) -> float:
    """Differencing step 1e-2 * (support width) / max |X|."""
    lo, hi = support_box(spec)
    width = min(b - a for a, b in zip(lo, hi))
    mx = max_norm(spec)
    return 1e-2 * width / mx if mx > 0.0 else 1e-2 * width


def classical_second_variation(
    u: ScalarField, phi: ScalarField, term: ReactionTerm, eps: float
) -> float:
    """Second variation of the energy in the function direction phi.

    Computes 2 * integral of |grad phi|^2 + f_eps'(u) phi^2 where
    f_eps'(t) = f'(t/eps)/eps^2.  At a critical point this equals the
    second inner variation along any X with phi = L_X u.

    Args:
        u: background field.
        phi: direction, zero on the two outermost node layers.
        term: reaction term.
        eps: positive scale.

    Returns:
        The quadratic form value.

    Raises:
        ValueError: on grid mismatch, eps <= 0, or phi touching the collar.
    """
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if phi.grid != u.grid:
        raise ValueError("phi must live on the grid of u")
    collar = np.ones(u.grid.shape, dtype=bool)
    collar[(slice(2, -2),) * u.grid.dim] = False
    if np.any(phi.values[collar] != 0.0):
        raise ValueError("phi must vanish on the boundary collar")
    g = gradient(phi)
    curv = term.fprime(u.values / eps) / eps**2
    dens = np.sum(g * g, axis=0) + curv * phi.values**2
    return 2.0 * integrate(ScalarField(grid=u.grid, values=dens))


def _edge_point(grid, kind: str, i: int, j: int, level: float, v) -> tuple:
    x0, y0 = grid.origin
    h = grid.h
    if kind == "h":
        va, vb = v[i, j], v[i + 1, j]
        theta = (level - va) / (vb - va)
        return (x0 + h * (i + theta), y0 + h * j)
    va, vb = v[i, j], v[i, j + 1]
    theta = (level - va) / (vb - va)
    return (x0 + h * i, y0 + h * (j + theta))


def _cell_segments(s, center_above, i: int, j: int):
    """Edge pairs crossed inside cell (i, j), saddle resolved by center."""
    a, b, c, d = s[i, j], s[i + 1, j], s[i + 1, j + 1], s[i, j + 1]
    south, north = ("h", i, j), ("h", i, j + 1)
    west, east = ("v", i, j), ("v", i + 1, j)
    code = (a, b, c, d)
    if code in ((True, False, False, False), (False, True, True, True)):
        return [(south, west)]
    if code in ((False, True, False, False), (True, False, True, True)):
        return [(south, east)]
    if code in ((False, False, True, False), (True, True, False, True)):
        return [(east, north)]
    if code in ((False, False, False, True), (True, True, True, False)):
        return [(north, west)]
    if code in ((True, True, False, False), (False, False, True, True)):
        return [(west, east)]
    if code in ((True, False, False, True), (False, True, True, False)):
        return [(south, north)]
    if code == (True, False, True, False):
        if center_above:
            return [(south, east), (north, west)]
        return [(south, west), (east, north)]
    if code == (False, True, False, True):
        if center_above:
            return [(south, west), (east, north)]
        return [(south, east), (north, west)]
    return []


def _chain(adj: dict, start, visited: set) -> list:
    out = [start]
    visited.add(start)
    cur = start
    while True:
        nxt = next((e for e in adj[cur] if e not in visited), None)
        if nxt is None:
            return out
        out.append(nxt)
        visited.add(nxt)
        cur = nxt


def _clip_inside(grid, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp points into the grid box; second output flags moved points."""
    lo = np.asarray(grid.origin)
    hi = np.asarray(grid.hi)
    clipped = np.clip(pts, lo, hi)
    moved = np.any(np.abs(clipped - pts) > 1e-12 * grid.h, axis=-1)
    return clipped, moved


def _offset_probe(
    field: ScalarField, pts: np.ndarray, nu: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Linear extrapolation of a node field from two in-phase probe points.

    Samples at p - 3h*nu and p - 5h*nu (inside the positive phase, clear
    of interface-polluted stencils) and extrapolates back to p.  Probes
    that leave the grid are clamped and flagged.
    """
    h = field.grid.h
    near, fn = _clip_inside(field.grid, pts - _PROBE_NEAR * h * nu)
    far, ff = _clip_inside(field.grid, pts - _PROBE_FAR * h * nu)
    ratio = _PROBE_NEAR / (_PROBE_FAR - _PROBE_NEAR)
    v_near = np.atleast_1d(np.asarray(sample(field, near)))
    v_far = np.atleast_1d(np.asarray(sample(field, far)))
    return v_near + ratio * (v_near - v_far), fn | ff


def extract_interface(u: ScalarField, level: float) -> InterfaceCurve:
    """Longest level-set polyline of u with per-vertex normal and curvature.

    Marching squares links the crossing points of {u = level} into
    chains; the longest chain (by arc length) is returned.  Normals come
    from -grad u/|grad u| probed inside the positive phase; curvature is
    div(grad u/|grad u|) probed at two offsets along the inward normal
    and extrapolated back to the vertex, so stencils never straddle the
    interface kink.

    Args:
        u: 2D field.
        level: contour value; a level outside the field range (or a
            constant field) yields an empty curve.

    Returns:
        InterfaceCurve; empty when the level set is empty.
    """
    if u.grid.dim != 2:
        raise ValueError("interface extraction requires a 2D field")
    grid = u.grid
    v = u.values
    s = v > level
    empty = InterfaceCurve(
        points=np.empty((0, 2)),
        normals=np.empty((0, 2)),
        curvature=np.empty(0),
        singular=np.empty(0, dtype=bool),
        closed=False,
    )
    counts = (
        s[:-1, :-1].astype(int)
        + s[1:, :-1].astype(int)
        + s[1:, 1:].astype(int)
        + s[:-1, 1:].astype(int)
    )
    cells = np.argwhere((counts > 0) & (counts < 4))
    if len(cells) == 0:
        return empty
    center = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[1:, 1:] + v[:-1, 1:])
    adj: dict[tuple, list] = {}
    for i, j in cells:
        for ea, eb in _cell_segments(s, center[i, j] > level, int(i), int(j)):
            adj.setdefault(ea, []).append(eb)
            adj.setdefault(eb, []).append(ea)
    if not adj:
        return empty
    visited: set = set()
    chains = []
    for start in [e for e in adj if len(adj[e]) == 1]:
        if start not in visited:
            chains.append(_chain(adj, start, visited))
    for start in adj:
        if start not in visited:
            chains.append(_chain(adj, start, visited))
    pts_of = {
        e: np.asarray(_edge_point(grid, *e, level, v)) for e in adj
    }

    def arclen(chain):
        p = np.stack([pts_of[e] for e in chain])
        return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))

    best = max(chains, key=arclen)
    points = np.stack([pts_of[e] for e in best])
    closed = len(best) >= 3 and best[0] in adj[best[-1]]

    g = gradient(u)
    norm = np.sqrt(np.sum(g * g, axis=0))
    floor = 1e-14 * (float(np.max(norm)) + 1e-300)
    nhat = np.where(norm > floor, g / np.maximum(norm, floor), 0.0)
    gx = ScalarField(grid=grid, values=g[0])
    gy = ScalarField(grid=grid, values=g[1])
    kx = np.gradient(nhat[0], grid.h, axis=0, edge_order=2)
    ky = np.gradient(nhat[1], grid.h, axis=1, edge_order=2)
    kappa = ScalarField(grid=grid, values=kx + ky)

    h = grid.h
    raw = np.stack([sample(gx, points), sample(gy, points)], axis=1)
    seed = -raw / np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), floor)
    probe, moved = _clip_inside(grid, points - _PROBE_NEAR * h * seed)
    refined = np.stack([sample(gx, probe), sample(gy, probe)], axis=1)
    rnorm = np.linalg.norm(refined, axis=1, keepdims=True)
    degenerate = rnorm[:, 0] <= floor
    normals = np.where(
        degenerate[:, None], [1.0, 0.0], -refined / np.maximum(rnorm, floor)
    )
    curv, clipped = _offset_probe(kappa, points, normals)
    singular = (
        moved | degenerate | clipped | (np.abs(curv) > _SINGULAR_CURVATURE / h)
    )
    return InterfaceCurve(
        points=points,
        normals=normals,
        curvature=curv,
        singular=singular,
        closed=closed,
    )


def _curve_quadrature(curve: InterfaceCurve, vertex_vals: np.ndarray) -> float:
    """Trapezoid rule of a per-vertex integrand along the polyline.

    Contributions of singular vertices are dropped, restricting the
    integral to the regular part of the interface.
    """
    pts = curve.points
    vals = np.where(curve.singular, 0.0, vertex_vals)
    if len(pts) < 2:
        return 0.0
    idx = list(range(len(pts)))
    pairs = list(zip(idx[:-1], idx[1:]))
    if curve.closed:
        pairs.append((idx[-1], idx[0]))
    acc = 0.0
    for a, b in pairs:
        ds = float(np.linalg.norm(pts[b] - pts[a]))
        acc += 0.5 * (vals[a] + vals[b]) * ds
    return acc


def surface_second_variation(
    u: ScalarField, spec: VectorFieldSpec, curve: InterfaceCurve
) -> float:
    """Second variation of a classical free-boundary solution, surface form.

    Returns 2 * [int_{u>0} |grad L_X u|^2 dx - int_curve H (L_X u)^2 ds].
    The bulk gradient is one-sided inside the positive phase; the curve
    integrand is probed inside the phase and extrapolated to the
    interface, excluding singular vertices.

    Args:
        u: classical solution field (harmonic in its positive phase with
            unit gradient along the interface).
        spec: deformation field, supported strictly inside the domain.
        curve: interface polyline extracted from u.

    Returns:
        The surface-form second variation.

    Raises:
        NotClassicalSolutionError: if |grad u| strays from 1 along the
            curve by more than 5e-2.
    """
    _require_interior_support(u, spec)
    grid = u.grid
    mask = u.values > 0.0
    pg = _phase_gradient(u.values, grid.h, mask)
    if len(curve):
        gnorm = ScalarField(grid=grid, values=np.sqrt(np.sum(pg * pg, axis=0)))
        trace, clipped = _offset_probe(gnorm, curve.points, curve.normals)
        ok = curve.singular | clipped
        worst = float(np.max(np.where(ok, 0.0, np.abs(trace - 1.0))))
        if worst > 5e-2:
            raise NotClassicalSolutionError(
                f"|grad u| strays from 1 by {worst:.4f} on the interface"
            )
    xv = evaluate(spec, grid.nodes()).reshape(grid.shape + (grid.dim,))
    lvals = sum(pg[a] * xv[..., a] for a in range(grid.dim))
    lg = _phase_gradient(lvals, grid.h, mask)
    dens = np.where(mask, np.sum(lg * lg, axis=0), 0.0)
    bulk = integrate(ScalarField(grid=grid, values=dens))
    curve_term = 0.0
    if len(curve):
        lfield = ScalarField(grid=grid, values=lvals)
        vertex_l, clipped = _offset_probe(lfield, curve.points, curve.normals)
        vertex_l = np.where(clipped, 0.0, vertex_l)
        curve_term = _curve_quadrature(curve, curve.curvature * vertex_l**2)
    return 2.0 * (bulk - curve_term)


def cjk_form(u: ScalarField, phi: ScalarField, curve: InterfaceCurve) -> float:
    """Stability form int_{u>0} |grad phi|^2 dx - int_curve H phi^2 ds.

    Args:
        u: solution field defining the positive phase.
        phi: smooth test function on the grid of u.
        curve: interface polyline extracted from u.

    Returns:
        The form value; negative values witness instability.
    """
    if phi.grid != u.grid:
        raise ValueError("phi must live on the grid of u")
    mask = u.values > 0.0
    g = gradient(phi)
    dens = np.where(mask, np.sum(g * g, axis=0), 0.0)
    bulk = integrate(ScalarField(grid=u.grid, values=dens))
    vals = np.asarray(sample(phi, curve.points)) if len(curve) else np.empty(0)
    curve_term = _curve_quadrature(curve, curve.curvature * vals**2)
    return bulk - curve_term


def variation_report(
    u: ScalarField,
    spec: VectorFieldSpec,
    term: ReactionTerm,
    eps: float,
    dt: float | None = None,
    curve: InterfaceCurve | None = None,
) -> VariationReport:
    """Bundle analytic, finite-difference, and quadratic-form variations.

    Args:
        u: field under deformation.
        spec: deformation field.
        term: reaction term.
        eps: nonnegative scale.
        dt: finite-difference step; None picks the default rule.
        curve: optional interface polyline; when given (eps = 0 fields),
            the surface form is evaluated as well.

    Returns:
        VariationReport; classical_second is filled for eps > 0 with
        phi = L_X u, surface_second when a curve is supplied.
    """
    if dt is None:
        dt = default_fd_step(spec)
    first_a = first_inner_variation(u, spec, term, eps)
    second_a = second_inner_variation(u, spec, term, eps)
    first_fd, second_fd = inner_variation_fd(u, spec, term, eps, dt)
    classical = None
    if eps > 0.0:
        classical = classical_second_variation(u, lie_derivative(u, spec), term, eps)
    surface = None
    if curve is not None:
        surface = surface_second_variation(u, spec, curve)
    return VariationReport(
        first_analytic=first_a,
        second_analytic=second_a,
        first_fd=first_fd,
        second_fd=second_fd,
        dt=dt,
        classical_second=classical,
        surface_second=surface,
    )


def report_to_json(report: VariationReport) -> dict:
    return {
        "first_analytic": report.first_analytic,
        "second_analytic": report.second_analytic,
        "first_fd": report.first_fd,
        "second_fd": report.second_fd,
        "dt": report.dt,
        "classical_second": report.classical_second,
        "surface_second": report.surface_second,
    }


def report_from_json(payload: dict) -> VariationReport:
    return VariationReport(
        first_analytic=float(payload["first_analytic"]),
        second_analytic=float(payload["second_analytic"]),
        first_fd=float(payload["first_fd"]),
        second_fd=float(payload["second_fd"]),
        dt=float(payload["dt"]),
        classical_second=(
            None
            if payload.get("classical_second") is None
            else float(payload["classical_second"])
        ),
        surface_second=(
            None
            if payload.get("surface_second") is None
            else float(payload["surface_second"])
        ),
    )


def save_curve(curve: InterfaceCurve, path: str | Path) -> None:
    """Write an interface polyline as CSV plus a topology sidecar JSON.

    Rows are "x,y,nu_x,nu_y,H" in chain order with 17 significant digits.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "nu_x", "nu_y", "H"])
        for p, nu, hval in zip(curve.points, curve.normals, curve.curvature):
            writer.writerow(
                [
                    f"{p[0]:.17g}",
                    f"{p[1]:.17g}",
                    f"{nu[0]:.17g}",
                    f"{nu[1]:.17g}",
                    f"{hval:.17g}",
                ]
            )
    sidecar = {
        "closed": curve.closed,
        "singular": [int(k) for k in np.nonzero(curve.singular)[0]],
    }
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_curve(path: str | Path) -> InterfaceCurve:
    """Read a curve written by save_curve."""
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = data.reshape(0, 5)
    singular = np.zeros(len(data), dtype=bool)
    singular[[int(k) for k in meta["singular"]]] = True
    return InterfaceCurve(
        points=data[:, 0:2],
        normals=data[:, 2:4],
        curvature=data[:, 4],
        singular=singular,
        closed=bool(meta["closed"]),
    )
