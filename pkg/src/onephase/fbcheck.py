"""Free-boundary diagnostics for transition-layer fields.

The checks quantify, on sampled fields, the structural properties that
distinguish genuine one-phase transitions from degenerate ones: linear
growth away from the low set (nondegeneracy), volume fraction of the low
set near the transition band (density), gradient bounds, decay of the
reaction energy toward an indicator, set convergence in Hausdorff
distance, and the rescaling u -> eps * u(x / eps) used to compare scales.

Scans discretize balls as node sets {q : |q - p| <= r} and report areas
as node counts times h^d.  Centers are restricted so every scanned ball
lies inside the grid domain; callers pick the window and the pass/fail
threshold, the scan only measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, maximum_filter1d
from scipy.spatial import cKDTree

from .field import GridSpec, ScalarField, gradient, integrate, sample
from .potentials import F_eps, ReactionTerm, make_reference

__all__ = [
    "LevelRegion",
    "CheckReport",
    "level_region",
    "nondegeneracy_scan",
    "density_scan",
    "zero_phase_density",
    "lipschitz_constant",
    "exit_radius",
    "poincare_ratio",
    "l1_gap",
    "hausdorff_distance",
    "blowdown",
    "check_to_json",
    "check_from_json",
    "save_region",
    "load_region",
]

# Relative height below which a node of a limit field counts as zero.
_ZERO_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LevelRegion:
    """Node set cut out of a field by a value band.

    Fields:
        indices: (n, dim) integer node multi-indices, in scan order.
        lo: lower band edge in units of u (-inf for one-sided bands).
        hi: upper band edge in units of u.
        eps: scale the band was derived from.
        theta: band parameter in profile units.
    """

    indices: np.ndarray
    lo: float
    hi: float
    eps: float
    theta: float

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim == 1:
            idx = idx.reshape(-1, 1)
        if idx.ndim != 2:
            raise ValueError("indices must be an (n, dim) array")
        object.__setattr__(self, "indices", idx)
        if not (self.lo <= self.hi):
            raise ValueError("band must satisfy lo <= hi")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps}")

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a parameter scan against a caller threshold.

    Fields:
        check: scan name.
        params: scanned parameter values, one per entry of values.
        values: measured constant per parameter; empty when nothing was
            eligible to scan.
        worst: extremal value over the grid (min for sense "min", max for
            "max"); None exactly when values is empty.
        threshold: caller's pass bar.
        passed: whether worst clears the threshold; False on empty scans.
        sense: "min" (pass iff worst >= threshold) or "max" (worst <=).
    """

    check: str
    params: tuple[float, ...]
    values: tuple[float, ...]
    worst: float | None
    threshold: float
    passed: bool
    sense: str = "min"

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("scan values must be finite")
        if self.values:
            want = min(self.values) if self.sense == "min" else max(self.values)
            if self.worst != want:
                raise ValueError("worst must be the extremal scanned value")
            ok = self.worst >= self.threshold
            if self.sense == "max":
                ok = self.worst <= self.threshold
            if self.passed != ok:
                raise ValueError("passed must reflect worst against threshold")
        elif self.worst is not None or self.passed:
            raise ValueError("empty scans must report worst=None and passed=False")


def _report(check, params, values, threshold, sense="min"):
    if len(values) == 0:
        return CheckReport(
            check=check,
            params=tuple(params),
            values=(),
            worst=None,
            threshold=threshold,
            passed=False,
            sense=sense,
        )
    worst = min(values) if sense == "min" else max(values)
    passed = worst >= threshold if sense == "min" else worst <= threshold
    return CheckReport(
        check=check,
        params=tuple(params),
        values=tuple(values),
        worst=worst,
        threshold=threshold,
        passed=passed,
        sense=sense,
    )


def level_region(
    u: ScalarField, term: ReactionTerm, eps: float, kind: str, theta: float
) -> LevelRegion:
    """Cut the low band Z or the transition band F out of a field.

    Args:
        u: sampled field.
        term: reaction term fixing the support endpoint T.
        eps: scale; bands live at heights theta * eps.
        kind: "Z" for {u <= theta * eps}, "F" for
            {theta * eps <= u <= T * eps}.
        theta: band parameter, 0 < theta <= T.

    Returns:
        LevelRegion with the selected node multi-indices.

    Raises:
        ValueError: on a bad kind, theta out of range, or eps <= 0.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0.0 < theta <= term.T:
        raise ValueError(f"theta must lie in (0, {term.T}], got {theta}")
    if kind == "Z":
        lo, hi = -math.inf, theta * eps
        mask = u.values <= hi
    elif kind == "F":
        lo, hi = theta * eps, term.T * eps
        mask = (u.values >= lo) & (u.values <= hi)
    else:
        raise ValueError(f"kind must be 'Z' or 'F', got {kind!r}")
    return LevelRegion(
        indices=np.argwhere(mask), lo=lo, hi=hi, eps=eps, theta=theta
    )


def _shift_axis(a: np.ndarray, k: int, axis: int, fill: float) -> np.ndarray:
    """Shift so that out[i] = a[i + k] along axis, padding with fill."""
    if k == 0:
        return a
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        src[axis], dst[axis] = slice(k, None), slice(None, -k)
    else:
        src[axis], dst[axis] = slice(None, k), slice(-k, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _row_halfwidths(r: float, h: float) -> np.ndarray:
    """Integer x-halfwidth of the disc of radius r at each row offset."""
    m = int(r / h + 1e-9)
    di = np.arange(-m, m + 1)
    return di, np.floor(np.sqrt(np.maximum(r**2 - (di * h) ** 2, 0.0)) / h + 1e-9).astype(int)


def _ball_max(values: np.ndarray, r: float, h: float) -> np.ndarray:
    """Max of values over the closed ball of radius r around each node."""
    if values.ndim == 1:
        m = int(r / h + 1e-9)
        return maximum_filter1d(values, 2 * m + 1, mode="constant", cval=-np.inf)
    offs, widths = _row_halfwidths(r, h)
    out = np.full_like(values, -np.inf)
    for di, w in zip(offs, widths):
        row = maximum_filter1d(values, 2 * w + 1, axis=1, mode="constant", cval=-np.inf)
        np.maximum(out, _shift_axis(row, di, 0, -np.inf), out=out)
    return out


def _window_sum(arr: np.ndarray, w: int, axis: int) -> np.ndarray:
    """Sum of arr over the centered window of halfwidth w along axis."""
    n = arr.shape[axis]
    csum = np.cumsum(arr, axis=axis, dtype=float)
    pad_shape = list(arr.shape)
    pad_shape[axis] = 1
    csum = np.concatenate([np.zeros(pad_shape), csum], axis=axis)
    hi = np.clip(np.arange(n) + w + 1, 0, n)
    lo = np.clip(np.arange(n) - w, 0, n)
    return np.take(csum, hi, axis=axis) - np.take(csum, lo, axis=axis)


def _ball_count(mask: np.ndarray, r: float, h: float) -> np.ndarray:
    """Node count of mask inside the closed ball of radius r, per center."""
    dense = mask.astype(float)
    if mask.ndim == 1:
        return _window_sum(dense, int(r / h + 1e-9), 0)
    offs, widths = _row_halfwidths(r, h)
    out = np.zeros_like(dense)
    for di, w in zip(offs, widths):
        out += _shift_axis(_window_sum(dense, w, 1), di, 0, 0.0)
    return out


def _ball_size(r: float, h: float, dim: int) -> int:
    if dim == 1:
        return 2 * int(r / h + 1e-9) + 1
    _, widths = _row_halfwidths(r, h)
    return int(np.sum(2 * widths + 1))


def _margin_mask(grid: GridSpec, r: float) -> np.ndarray:
    """True where the closed ball of radius r stays inside the domain."""
    need = r / grid.h - 1e-9
    mask = np.ones(grid.shape, dtype=bool)
    for ax, n in enumerate(grid.shape):
        i = np.arange(n)
        ok = (i >= need) & (n - 1 - i >= need)
        shape = [1] * len(grid.shape)
        shape[ax] = n
        mask &= ok.reshape(shape)
    return mask


def _window_mask(grid: GridSpec, window) -> np.ndarray:
    if window is None:
        return np.ones(grid.shape, dtype=bool)
    lo = np.atleast_1d(np.asarray(window[0], dtype=float))
    hi = np.atleast_1d(np.asarray(window[1], dtype=float))
    if lo.shape != (grid.dim,) or hi.shape != (grid.dim,):
        raise ValueError("window corners must match the grid dimension")
    mask = np.ones(grid.shape, dtype=bool)
    for ax, axis_nodes in enumerate(grid.axes()):
        ok = (axis_nodes >= lo[ax] - 1e-12) & (axis_nodes <= hi[ax] + 1e-12)
        shape = [1] * grid.dim
        shape[ax] = len(axis_nodes)
        mask &= ok.reshape(shape)
    return mask


def nondegeneracy_scan(
    u: ScalarField,
    eps: float,
    theta: float,
    radii,
    window=None,
    threshold: float = 0.0,
) -> CheckReport:
    """Measure the linear-growth constant sup_{B_r(p)} u / r.

    For each radius the scan minimizes the ratio over centers p with
    u(p) >= theta * eps inside the window whose ball fits in the domain.

    Args:
        u: sampled field.
        eps: scale of the threshold height.
        theta: height parameter; centers need u >= theta * eps.
        radii: positive ball radii to scan.
        window: optional (lo, hi) box restricting centers.
        threshold: pass bar on the minimum constant.

    Returns:
        CheckReport with one constant per radius; empty when no node
        clears the height threshold inside the window.

    Raises:
        ValueError: on nonpositive inputs, or when a radius leaves no
            eligible center with its ball inside the domain.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    eligible = (u.values >= theta * eps) & _window_mask(u.grid, window)
    if not eligible.any():
        return _report("nondegeneracy", radii, [], threshold)
    values = []
    for r in radii:
        centers = eligible & _margin_mask(u.grid, r)
        if not centers.any():
            raise ValueError(f"radius {r} leaves no eligible center in the domain")
        sup = _ball_max(u.values, r, u.grid.h)
        values.append(float(np.min(sup[centers])) / r)
    return _report("nondegeneracy", radii, values, threshold)


def density_scan(
    u: ScalarField,
    eps: float,
    L: float,
    radii,
    threshold: float = 0.0,
    term: ReactionTerm | None = None,
) -> CheckReport:
    """Measure the low-set volume fraction near the transition band.

    For each radius r the scan minimizes
    |{u <= (tau/4) eps} ∩ B_{r/2}(x)| / |B_{r/2}| over centers x in the
    band {tau eps <= u <= T eps}, with tau = T / 2.

    Args:
        u: sampled field.
        eps: scale.
        L: lower bound enforced on r / eps.
        radii: ball diameters to scan; each must be >= L * eps.
        threshold: pass bar on the minimum fraction.
        term: reaction term fixing T; the reference family by default.

    Returns:
        CheckReport with one fraction per radius; empty when the band
        {tau eps <= u <= T eps} has no nodes.

    Raises:
        ValueError: on parameter violations or when a radius leaves no
            center with its ball inside the domain.
    """
    if term is None:
        term = make_reference(1.0)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    radii = [float(r) for r in radii]
    if not radii or any(r < L * eps - 1e-12 for r in radii):
        raise ValueError("every radius must be at least L * eps")
    tau = term.T / 2.0
    band = (u.values >= tau * eps) & (u.values <= term.T * eps)
    if not band.any():
        return _report("density", radii, [], threshold)
    low = u.values <= (tau / 4.0) * eps
    values = []
    for r in radii:
        centers = band & _margin_mask(u.grid, r / 2.0)
        if not centers.any():
            raise ValueError(f"radius {r} leaves no band center in the domain")
        count = _ball_count(low, r / 2.0, u.grid.h)
        total = _ball_size(r / 2.0, u.grid.h, u.grid.dim)
        values.append(float(np.min(count[centers])) / total)
    return _report("density", radii, values, threshold)


def _zero_mask(values: np.ndarray) -> np.ndarray:
    top = float(np.max(values, initial=0.0))
    return values <= _ZERO_REL_TOL * max(top, 0.0)


def _limit_boundary(values: np.ndarray) -> np.ndarray:
    """Nodes adjacent (including themselves) to both phases."""
    zero = _zero_mask(values)
    pos = ~zero
    return (zero & binary_dilation(pos)) | (pos & binary_dilation(zero))


def zero_phase_density(u: ScalarField, radii, threshold: float = 0.0) -> CheckReport:
    """Measure the zero-set volume fraction around the phase boundary.

    Centers are the nodes adjacent to both the zero set {u <= tol} and
    its complement; per radius the scan minimizes
    |{u = 0} ∩ B_r(x)| / |B_r| over those centers.

    Args:
        u: limit field (zero set read with a relative tolerance).
        radii: positive ball radii.
        threshold: pass bar on the minimum fraction.

    Returns:
        CheckReport; empty when either phase is missing.

    Raises:
        ValueError: on bad radii or when a radius leaves no center with
            its ball inside the domain.
    """
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    zero = _zero_mask(u.values)
    if not zero.any() or zero.all():
        return _report("zero-phase-density", radii, [], threshold)
    boundary = _limit_boundary(u.values)
    values = []
    for r in radii:
        centers = boundary & _margin_mask(u.grid, r)
        if not centers.any():
            raise ValueError(f"radius {r} leaves no boundary center in the domain")
        count = _ball_count(zero, r, u.grid.h)
        total = _ball_size(r, u.grid.h, u.grid.dim)
        values.append(float(np.min(count[centers])) / total)
    return _report("zero-phase-density", radii, values, threshold)


def lipschitz_constant(u: ScalarField, window=None) -> float:
    """Largest gradient magnitude over the window (whole domain by default)."""
    g = gradient(u)
    norm = np.sqrt(np.sum(g * g, axis=0))
    return float(np.max(norm[_window_mask(u.grid, window)]))


def exit_radius(
    u: ScalarField,
    eps: float,
    theta: float,
    p,
    term: ReactionTerm | None = None,
) -> float:
    """Distance from p to the half-height set {u >= tau * eps}.

    This is the smallest r with sup over B_r(p) of u at least tau * eps,
    tau = T / 2.  Balls are only scanned while they fit inside the
    domain; if the set is not reached by then the result is inf.

    Args:
        u: sampled field.
        eps: scale.
        theta: height of p in profile units; needs 0 < theta < tau and
            u(p) >= theta * eps.
        p: scan center.
        term: reaction term fixing T; the reference family by default.

    Returns:
        Exit radius in physical units, or inf when not reached.

    Raises:
        ValueError: on parameter violations.
    """
    if term is None:
        term = make_reference(1.0)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    tau = term.T / 2.0
    if not 0.0 < theta < tau:
        raise ValueError(f"theta must lie in (0, {tau}), got {theta}")
    pt = np.atleast_1d(np.asarray(p, dtype=float))
    height = float(sample(u, pt.reshape(1, -1))[0])
    if height < theta * eps - 1e-12:
        raise ValueError(f"u(p) = {height} is below theta * eps = {theta * eps}")
    hit = u.values >= tau * eps
    if not hit.any():
        return math.inf
    nodes = u.grid.nodes()[hit.ravel()]
    dmin = float(np.min(np.linalg.norm(nodes - pt, axis=1)))
    lo = np.asarray(u.grid.origin, dtype=float)
    hi = np.asarray(u.grid.hi, dtype=float)
    wall = float(min(np.min(pt - lo), np.min(hi - pt)))
    return dmin if dmin <= wall + 1e-12 else math.inf


def poincare_ratio(g: ScalarField, region=None, zero_fraction: float = 0.0) -> float:
    """L1 norm of g over R times the L1 norm of its gradient, on a box.

    Args:
        g: sampled field vanishing on part of the region.
        region: optional (lo, hi) box; whole domain by default.
        zero_fraction: fraction of region nodes required to be zero
            (relative tolerance); violating it is an error.

    Returns:
        ||g||_L1 / (R ||grad g||_L1) with R the half-diameter of the
        region box, or 0.0 when the gradient norm vanishes.

    Raises:
        ValueError: when g vanishes on fewer nodes than promised.
    """
    mask = _window_mask(g.grid, region)
    vals = np.abs(g.values[mask])
    zeros = np.count_nonzero(vals <= _ZERO_REL_TOL * float(np.max(vals, initial=0.0)))
    if zeros < zero_fraction * vals.size - 1e-9:
        raise ValueError(
            f"g vanishes on {zeros / vals.size:.3f} of the region, "
            f"below the promised {zero_fraction}"
        )
    grad = gradient(g)
    gnorm = np.sqrt(np.sum(grad * grad, axis=0))[mask]
    cell = g.grid.h**g.grid.dim
    num = float(np.sum(vals)) * cell
    den = float(np.sum(gnorm)) * cell
    if region is None:
        lo = np.asarray(g.grid.origin, dtype=float)
        hi = np.asarray(g.grid.hi, dtype=float)
    else:
        lo = np.atleast_1d(np.asarray(region[0], dtype=float))
        hi = np.atleast_1d(np.asarray(region[1], dtype=float))
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    if den * radius == 0.0:
        return 0.0
    return num / (radius * den)


def l1_gap(
    u_eps: ScalarField, u_limit: ScalarField, term: ReactionTerm, eps: float
) -> float:
    """Integral of |F_eps(u_eps) - indicator(u_limit > 0)| over the grid.

    Args:
        u_eps: field at scale eps.
        u_limit: candidate limit field on the same grid.
        term: reaction term.
        eps: positive scale.

    Returns:
        The L1 gap between the reaction energy density and the indicator.

    Raises:
        ValueError: on grid mismatch or nonpositive eps.
    """
    if u_eps.grid != u_limit.grid:
        raise ValueError("fields must share one grid")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    dens = np.abs(F_eps(term, eps, u_eps.values) - (u_limit.values > 0.0))
    return integrate(ScalarField(grid=u_eps.grid, values=dens))


def hausdorff_distance(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """Symmetric Hausdorff distance between node index sets, in units of h.

    Args:
        a: (n, dim) or (n,) integer node indices.
        b: second index set, same dimension.
        h: grid spacing converting index distances to physical ones.

    Returns:
        max over both directed nearest-neighbor maxima, times h.

    Raises:
        ValueError: when either set is empty or h is nonpositive.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    pa = np.asarray(a, dtype=float)
    pb = np.asarray(b, dtype=float)
    if pa.ndim == 1:
        pa = pa.reshape(-1, 1)
    if pb.ndim == 1:
        pb = pb.reshape(-1, 1)
    if pa.size == 0 or pb.size == 0:
        raise ValueError("both node sets must be nonempty")
    d_ab = float(np.max(cKDTree(pb).query(pa)[0]))
    d_ba = float(np.max(cKDTree(pa).query(pb)[0]))
    return h * max(d_ab, d_ba)


def blowdown(u: ScalarField, eps: float, target_grid: GridSpec) -> ScalarField:
    """Rescale to eps * u(x / eps) sampled on the target grid.

    Args:
        u: source field.
        eps: positive scale; target nodes divided by eps must stay
            inside the source domain.
        target_grid: grid of the rescaled field.

    Returns:
        ScalarField on target_grid.

    Raises:
        ValueError: on nonpositive eps or dimension mismatch.
        DomainError: when a rescaled node leaves the source domain.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if target_grid.dim != u.grid.dim:
        raise ValueError("target grid dimension must match the source")
    vals = eps * sample(u, target_grid.nodes() / eps)
    return ScalarField(grid=target_grid, values=vals.reshape(target_grid.shape))


def check_to_json(report: CheckReport) -> dict:
    """Serialize a CheckReport to a JSON-ready dict."""
    return {
        "check": report.check,
        "params": list(report.params),
        "values": list(report.values),
        "worst": report.worst,
        "threshold": report.threshold,
        "pass": report.passed,
        "sense": report.sense,
    }


def check_from_json(payload: dict) -> CheckReport:
    """Rebuild a CheckReport from its JSON dict."""
    return CheckReport(
        check=payload["check"],
        params=tuple(payload["params"]),
        values=tuple(payload["values"]),
        worst=payload["worst"],
        threshold=payload["threshold"],
        passed=payload["pass"],
        sense=payload.get("sense", "min"),
    )


def save_region(region: LevelRegion, path) -> None:
    """Write a region as a CSV index list with the band in the header."""
    dim = region.indices.shape[1]
    cols = ",".join(f"i{k}" for k in range(dim))
    meta = f"# lo={region.lo!r} hi={region.hi!r} eps={region.eps!r} theta={region.theta!r}"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(meta + "\n" + cols + "\n")
        np.savetxt(fh, region.indices, fmt="%d", delimiter=",")


def load_region(path) -> LevelRegion:
    """Read a region written by save_region."""
    with open(path, "r", encoding="utf-8") as fh:
        meta = fh.readline().strip()
        fh.readline()
        body = np.loadtxt(fh, delimiter=",", dtype=int, ndmin=2)
    fields = dict(tok.split("=") for tok in meta.lstrip("# ").split())
    return LevelRegion(
        indices=body,
        lo=float(fields["lo"]),
        hi=float(fields["hi"]),
        eps=float(fields["eps"]),
        theta=float(fields["theta"]),
    )
