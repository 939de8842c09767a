"""Uniform-grid scalar fields and closed-form test vector fields.

Scalar fields live on tensor grids with a single spacing h shared by all
axes; discrete calculus (gradient, laplacian, trapezoid quadrature) is
second order.  Vector fields for domain deformations are closed-form: a
polynomial of total degree at most 3 in local coordinates, multiplied by
the compactly supported bump psi(y) = (1 - y^2)^4 per coordinate.  Their
first and second partials are evaluated analytically, never by grid
differencing, so flow-based finite differences can be compared against
exact inner-variation integrands without stencil noise.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import (
    RectBivariateSpline,
    RegularGridInterpolator,
    make_interp_spline,
)

__all__ = [
    "DomainError",
    "GridSpec",
    "ScalarField",
    "PolyBump",
    "VectorFieldSpec",
    "make_grid",
    "gradient",
    "laplacian",
    "interior_mask",
    "integrate",
    "sample",
    "evaluate",
    "jacobian",
    "hessian",
    "divergence",
    "support_box",
    "max_norm",
    "flow",
    "pullback",
    "save_field",
    "load_field",
    "spec_to_json",
    "spec_from_json",
    "save_vector_spec",
    "load_vector_spec",
]

_MAX_TOTAL_DEGREE = 3


class DomainError(ValueError):
    """A point fell outside the grid domain."""


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid: nodes at origin + h * (i, j).

    Attributes:
        dim: 1 or 2.
        origin: coordinates of node (0[, 0]).
        h: node spacing, shared by all axes.
        shape: node counts per axis, each at least 3.
    """

    dim: int
    origin: tuple[float, ...]
    h: float
    shape: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.origin) != self.dim or len(self.shape) != self.dim:
            raise ValueError("origin and shape must have length dim")
        if not self.h > 0.0:
            raise ValueError(f"spacing must be positive, got {self.h}")
        if any(n < 3 for n in self.shape):
            raise ValueError(f"need at least 3 nodes per axis, got {self.shape}")

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple(o + self.h * (n - 1) for o, n in zip(self.origin, self.shape))

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            o + self.h * np.arange(n) for o, n in zip(self.origin, self.shape)
        )

    def nodes(self) -> np.ndarray:
        """All node coordinates, row-major, as an (n_nodes, dim) array."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def make_grid(
    lo: float | Sequence[float], hi: float | Sequence[float], n: int | Sequence[int]
) -> GridSpec:
    """Build a GridSpec covering the box [lo, hi] with n nodes per axis.

    Args:
        lo: lower corner (scalar means 1D).
        hi: upper corner.
        n: node count per axis; scalars broadcast across axes.

    Returns:
        GridSpec whose last node lands on hi.

    Raises:
        ValueError: if the axes would not share a common spacing.
    """
    lo_t = tuple(np.atleast_1d(np.asarray(lo, dtype=float)))
    hi_t = tuple(np.atleast_1d(np.asarray(hi, dtype=float)))
    dim = len(lo_t)
    n_t = (n,) * dim if np.isscalar(n) else tuple(int(k) for k in n)
    if len(hi_t) != dim or len(n_t) != dim:
        raise ValueError("lo, hi, n must agree in length")
    spacings = [(b - a) / (k - 1) for a, b, k in zip(lo_t, hi_t, n_t)]
    h = spacings[0]
    if any(abs(s - h) > 1e-12 * abs(h) for s in spacings[1:]):
        raise ValueError(f"axes disagree on spacing: {spacings}")
    return GridSpec(dim=dim, origin=lo_t, h=h, shape=n_t)


@dataclasses.dataclass(frozen=True, eq=False)
class ScalarField:
    """Grid plus one finite value per node, row-major."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)


def gradient(u: ScalarField) -> np.ndarray:
    """Second-order gradient, centered inside and one-sided at the boundary.

    Args:
        u: field on a grid with at least 3 nodes per axis.

    Returns:
        Array of shape (dim, *grid.shape); component k is the derivative
        along axis k.
    """
    g = np.gradient(u.values, u.grid.h, edge_order=2)
    if u.grid.dim == 1:
        return np.asarray(g)[np.newaxis, :]
    return np.stack(g, axis=0)


def laplacian(u: ScalarField) -> ScalarField:
    """5-point (3-point in 1D) laplacian; boundary nodes are set to 0.

    Use interior_mask to tell genuine zeros from the flagged boundary.
    """
    v = u.values
    out = np.zeros_like(v)
    h2 = u.grid.h**2
    core = (slice(1, -1),) * u.grid.dim
    acc = -2.0 * u.grid.dim * v[core]
    for ax in range(u.grid.dim):
        lo = tuple(
            slice(0, -2) if k == ax else slice(1, -1) for k in range(u.grid.dim)
        )
        hi = tuple(
            slice(2, None) if k == ax else slice(1, -1) for k in range(u.grid.dim)
        )
        acc = acc + v[lo] + v[hi]
    out[core] = acc / h2
    return ScalarField(grid=u.grid, values=out)


def interior_mask(grid: GridSpec) -> np.ndarray:
    """Boolean array marking nodes not on the grid boundary."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask[(slice(1, -1),) * grid.dim] = True
    return mask


def integrate(u: ScalarField) -> float:
    """Tensor-product trapezoid rule over the whole grid domain."""
    acc = u.values
    for _ in range(u.grid.dim):
        acc = np.trapezoid(acc, dx=u.grid.h, axis=-1)
    return float(acc)


_SPLINE_DEGREE = {"cubic": 3, "quintic": 5}


def _interpolator(u: ScalarField, method: str = "linear"):
    if method == "linear":
        return RegularGridInterpolator(
            u.grid.axes(), u.values, method="linear", bounds_error=True
        )
    # Interpolating tensor splines.  RegularGridInterpolator's own cubic and
    # quintic modes are only second-order accurate between nodes, which is
    # not good enough when the samples feed difference quotients.
    k = _SPLINE_DEGREE[method]
    axes = u.grid.axes()
    if u.grid.dim == 1:
        spline = make_interp_spline(axes[0], u.values, k=k)
        return lambda pts: spline(pts[:, 0])
    spline2 = RectBivariateSpline(axes[0], axes[1], u.values, kx=k, ky=k)
    return lambda pts: spline2.ev(pts[:, 0], pts[:, 1])


def _snap_inside(grid: GridSpec, pts: np.ndarray) -> np.ndarray:
    lo = np.asarray(grid.origin)
    hi = np.asarray(grid.hi)
    tol = 1e-9 * grid.h
    if np.any(pts < lo - tol) or np.any(pts > hi + tol):
        bad = pts[np.any((pts < lo - tol) | (pts > hi + tol), axis=-1)]
        raise DomainError(f"point outside grid domain: {bad[:1]!r}")
    return np.clip(pts, lo, hi)


def sample(
    u: ScalarField, p: Iterable[float] | np.ndarray, method: str = "linear"
) -> float | np.ndarray:
    """Interpolate u at one point or a batch of points.

    Args:
        u: field to sample.
        p: point of shape (dim,) or batch of shape (n, dim).
        method: "linear" (default) or "cubic" for a tensor cubic spline.

    Returns:
        Scalar for a single point, 1D array for a batch.

    Raises:
        DomainError: if any point lies outside the grid domain.
    """
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != u.grid.dim:
        raise ValueError(f"points must have {u.grid.dim} coordinates")
    vals = _interpolator(u, method)(_snap_inside(u.grid, pts))
    return float(vals[0]) if single else vals


@dataclasses.dataclass(frozen=True, eq=False)
class PolyBump:
    """One vector-field component: polynomial times per-coordinate bump.

    In local coordinates y = (x - center) / halfwidths the component reads
    P(y) * prod_k (1 - y_k^2)^4 for |y_k| < 1 and 0 outside.  coeffs[a, b]
    multiplies y_1^a y_2^b (one index in 1D); total degree is capped at 3.
    """

    coeffs: np.ndarray
    center: tuple[float, ...]
    halfwidths: tuple[float, ...]

    def __post_init__(self) -> None:
        dim = len(self.center)
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (_MAX_TOTAL_DEGREE + 1,) * dim:
            raise ValueError(f"coeffs must have shape {(4,) * dim}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        degree = np.indices(c.shape).sum(axis=0)
        if np.any(c[degree > _MAX_TOTAL_DEGREE] != 0.0):
            raise ValueError("total degree above 3 is not admitted")
        if len(self.halfwidths) != dim or any(w <= 0 for w in self.halfwidths):
            raise ValueError("halfwidths must be positive, one per axis")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "halfwidths", tuple(float(v) for v in self.halfwidths))


@dataclasses.dataclass(frozen=True, eq=False)
class VectorFieldSpec:
    """Closed-form deformation field: one PolyBump per coordinate axis."""

    dim: int
    components: tuple[PolyBump, ...]

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.components) != self.dim:
            raise ValueError("need exactly one component per axis")
        for comp in self.components:
            if len(comp.center) != self.dim:
                raise ValueError("component dimension mismatch")
        object.__setattr__(self, "components", tuple(self.components))


def _bump_factors(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # psi and derivatives, zeroed outside |y| < 1 where the formulas lie.
    inside = np.abs(y) < 1.0
    q = 1.0 - y * y
    psi = np.where(inside, q**4, 0.0)
    dpsi = np.where(inside, -8.0 * y * q**3, 0.0)
    ddpsi = np.where(inside, 8.0 * q * q * (7.0 * y * y - 1.0), 0.0)
    return psi, dpsi, ddpsi


def _powers(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    one = np.ones_like(y)
    zero = np.zeros_like(y)
    pw = np.stack([one, y, y * y, y**3], axis=-1)
    dpw = np.stack([zero, one, 2.0 * y, 3.0 * y * y], axis=-1)
    ddpw = np.stack([zero, zero, 2.0 * one, 6.0 * y], axis=-1)
    return pw, dpw, ddpw


def _component_tables(comp: PolyBump, pts: np.ndarray, order: int):
    """Value and x-derivatives of one component at pts (n, dim)."""
    dim = len(comp.center)
    w = np.asarray(comp.halfwidths)
    y = (pts - np.asarray(comp.center)) / w
    psi = [_bump_factors(y[:, k]) for k in range(dim)]
    pw = [_powers(y[:, k]) for k in range(dim)]
    c = comp.coeffs

    def poly(der: tuple[int, ...]) -> np.ndarray:
        if dim == 1:
            return pw[0][der[0]] @ c
        return np.einsum("ab,na,nb->n", c, pw[0][der[0]], pw[1][der[1]])

    def bump(der: tuple[int, ...]) -> np.ndarray:
        out = psi[0][der[0]]
        for k in range(1, dim):
            out = out * psi[k][der[k]]
        return out

    e = [tuple(1 if k == ax else 0 for k in range(dim)) for ax in range(dim)]
    zero = (0,) * dim
    val = poly(zero) * bump(zero)
    if order == 0:
        return val, None, None

    grad = np.empty((pts.shape[0], dim))
    for j in range(dim):
        grad[:, j] = (poly(e[j]) * bump(zero) + poly(zero) * bump(e[j])) / w[j]
    if order == 1:
        return val, grad, None

    hess = np.empty((pts.shape[0], dim, dim))
    for j in range(dim):
        for k in range(j, dim):
            der = tuple(e[j][m] + e[k][m] for m in range(dim))
            hjk = (
                poly(der) * bump(zero)
                + poly(e[j]) * bump(e[k])
                + poly(e[k]) * bump(e[j])
                + poly(zero) * bump(der)
            ) / (w[j] * w[k])
            hess[:, j, k] = hjk
            hess[:, k, j] = hjk
    return val, grad, hess


def _as_batch(spec: VectorFieldSpec, p) -> tuple[np.ndarray, bool]:
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != spec.dim:
        raise ValueError(f"points must have {spec.dim} coordinates")
    return pts, single


def evaluate(spec: VectorFieldSpec, p) -> np.ndarray:
    """X at one point (returns shape (dim,)) or a batch (returns (n, dim))."""
    pts, single = _as_batch(spec, p)
    out = np.stack(
        [_component_tables(comp, pts, 0)[0] for comp in spec.components], axis=-1
    )
    return out[0] if single else out


def jacobian(spec: VectorFieldSpec, p) -> np.ndarray:
    """Exact Jacobian J[i, j] = dX^i/dx_j at p; batched shape (n, dim, dim)."""
    pts, single = _as_batch(spec, p)
    rows = [_component_tables(comp, pts, 1)[1] for comp in spec.components]
    out = np.stack(rows, axis=1)
    return out[0] if single else out


def hessian(spec: VectorFieldSpec, p) -> np.ndarray:
    """Exact second partials H[i, j, k] = d^2 X^i / dx_j dx_k at p."""
    pts, single = _as_batch(spec, p)
    rows = [_component_tables(comp, pts, 2)[2] for comp in spec.components]
    out = np.stack(rows, axis=1)
    return out[0] if single else out


def divergence(spec: VectorFieldSpec, p) -> float | np.ndarray:
    """div X at p, from the analytic Jacobian trace."""
    pts, single = _as_batch(spec, p)
    div = np.trace(jacobian(spec, pts), axis1=-2, axis2=-1)
    return float(div[0]) if single else div


def support_box(spec: VectorFieldSpec) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Smallest box outside which X and all its partials vanish."""
    lo = [
        min(c.center[k] - c.halfwidths[k] for c in spec.components)
        for k in range(spec.dim)
    ]
    hi = [
        max(c.center[k] + c.halfwidths[k] for c in spec.components)
        for k in range(spec.dim)
    ]
    return tuple(lo), tuple(hi)


def max_norm(spec: VectorFieldSpec, n: int = 65) -> float:
    """Sampled estimate of sup |X| (componentwise max over a support lattice)."""
    lo, hi = support_box(spec)
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return float(np.max(np.abs(evaluate(spec, pts))))


def flow(spec: VectorFieldSpec, t: float, p, n_steps: int = 64) -> np.ndarray:
    """Flow map of X: integrate dq/dt = X(q) from p for time t.

    Args:
        spec: deformation field.
        t: flow time, any sign.
        p: starting point (dim,) or batch (n, dim).
        n_steps: RK4 step count, at least 1.

    Returns:
        End point(s), same shape as p.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    pts, single = _as_batch(spec, p)
    q = pts.copy()
    # Points outside the support box are fixed points of the flow and of
    # every RK4 stage (X = 0 there), so only the inside batch is advanced.
    lo, hi = support_box(spec)
    moving = np.all((pts > np.asarray(lo)) & (pts < np.asarray(hi)), axis=-1)
    qm = q[moving]
    dt = t / n_steps
    for _ in range(n_steps):
        k1 = evaluate(spec, qm)
        k2 = evaluate(spec, qm + 0.5 * dt * k1)
        k3 = evaluate(spec, qm + 0.5 * dt * k2)
        k4 = evaluate(spec, qm + dt * k3)
        qm = qm + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q[moving] = qm
    return q[0] if single else q


def pullback(
    u: ScalarField, spec: VectorFieldSpec, t: float, n_steps: int = 64,
    method: str = "linear",
) -> ScalarField:
    """Deformed competitor u(phi_{-t}(x)) on the grid of u.

    Args:
        u: field to deform.
        spec: deformation field; its support box should sit strictly inside
            the grid domain so trajectories cannot escape.
        t: deformation time.
        n_steps: RK4 step count for the flow.
        method: interpolation used to sample u at the flowed points.  Linear
            sampling adds grid-scale noise that is fine for energies but
            ruins difference quotients in t; pass "cubic" when the result
            feeds a finite-difference derivative.

    Returns:
        ScalarField on the same grid; equals u at t = 0.

    Raises:
        DomainError: if a trajectory leaves the grid domain.
    """
    nodes = u.grid.nodes()
    q = flow(spec, -t, nodes, n_steps)
    vals = u.values.copy().reshape(-1)
    moved = np.any(q != nodes, axis=-1)
    if np.any(moved):
        vals[moved] = np.asarray(sample(u, q[moved], method)).reshape(-1)
    return ScalarField(grid=u.grid, values=vals.reshape(u.grid.shape))


def save_field(u: ScalarField, path: str | Path) -> None:
    """Write a field as CSV plus a grid sidecar JSON.

    2D rows are "i,j,x,y,u" in row-major node order; 1D rows are "i,x,u".
    Floats use 17 significant digits so reload is bit-exact.
    """
    path = Path(path)
    axes = u.grid.axes()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if u.grid.dim == 1:
            writer.writerow(["i", "x", "u"])
            for i, (x, v) in enumerate(zip(axes[0], u.values)):
                writer.writerow([i, f"{x:.17g}", f"{v:.17g}"])
        else:
            writer.writerow(["i", "j", "x", "y", "u"])
            for i, x in enumerate(axes[0]):
                for j, y in enumerate(axes[1]):
                    writer.writerow(
                        [i, j, f"{x:.17g}", f"{y:.17g}", f"{u.values[i, j]:.17g}"]
                    )
    sidecar = {
        "dim": u.grid.dim,
        "origin": list(u.grid.origin),
        "h": u.grid.h,
        "shape": list(u.grid.shape),
    }
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_field(path: str | Path) -> ScalarField:
    """Read a field written by save_field."""
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    grid = GridSpec(
        dim=int(meta["dim"]),
        origin=tuple(float(v) for v in meta["origin"]),
        h=float(meta["h"]),
        shape=tuple(int(n) for n in meta["shape"]),
    )
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ScalarField(grid=grid, values=data[:, -1].reshape(grid.shape))


def spec_to_json(spec: VectorFieldSpec) -> dict:
    return {
        "dim": spec.dim,
        "components": [
            {
                "coeffs": comp.coeffs.tolist(),
                "center": list(comp.center),
                "halfwidths": list(comp.halfwidths),
            }
            for comp in spec.components
        ],
    }


def spec_from_json(payload: dict) -> VectorFieldSpec:
    comps = tuple(
        PolyBump(
            coeffs=np.asarray(entry["coeffs"], dtype=float),
            center=tuple(float(v) for v in entry["center"]),
            halfwidths=tuple(float(v) for v in entry["halfwidths"]),
        )
        for entry in payload["components"]
    )
    return VectorFieldSpec(dim=int(payload["dim"]), components=comps)


def save_vector_spec(spec: VectorFieldSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_json(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_vector_spec(path: str | Path) -> VectorFieldSpec:
    with open(path) as fh:
        return spec_from_json(json.load(fh))
