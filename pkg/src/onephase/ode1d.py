"""One-dimensional profile ODEs: the monotone transition and the wedge family.

Both profiles solve V'' = f_eps(V).  The monotone profile (eps = 1) has
V(0) = T, V'(0) = 1 and decays exponentially to 0 on the left while growing
affinely on the right.  The wedge profile V_eps^s starts flat at the height
eps * Finv(1 - s^2) fixed by the first integral

    (V')^2 = F(V/eps) - F(V(0)/eps)

and approaches the asymptotic slopes +-s.  The first integral doubles as an
a-posteriori oracle for the fixed-step integrator.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .potentials import ReactionTerm

__all__ = [
    "IntegrationFailure",
    "Profile1D",
    "solve_monotone",
    "solve_wedge",
    "first_integral_residual",
    "rescale",
    "save_profile",
    "load_profile",
]

_UNDERFLOW_FLOOR = 1e-14


class IntegrationFailure(RuntimeError):
    """The profile left the admissible range; the step size is too large."""


@dataclass(frozen=True)
class Profile1D:
    """Sampled 1D profile with derivative trace.

    Fields:
        eps: scale of the profile (1 for the raw monotone solution).
        kind: "monotone" or "wedge".
        s: asymptotic slope for wedge profiles, None otherwise.
        t: sorted sample grid containing 0.
        V: profile values, nonnegative.
        Vp: derivative values.
        h: grid spacing.
        T: support endpoint of the generating reaction term.
    """

    eps: float
    kind: str
    s: float | None
    t: np.ndarray
    V: np.ndarray
    Vp: np.ndarray
    h: float
    T: float


def _rk4_scan(rhs, v0: float, w0: float, step: float, n_steps: int, neg_tol: float):
    """Integrate V'' = rhs(V) with RK4; stops once V underflows below 1e-14."""
    V = np.zeros(n_steps + 1)
    W = np.zeros(n_steps + 1)
    V[0], W[0] = v0, w0
    v, w = v0, w0
    for k in range(n_steps):
        k1v = w
        k1w = rhs(v)
        k2v = w + 0.5 * step * k1w
        k2w = rhs(v + 0.5 * step * k1v)
        k3v = w + 0.5 * step * k2w
        k3w = rhs(v + 0.5 * step * k2v)
        k4v = w + step * k3w
        k4w = rhs(v + step * k3v)
        v = v + step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        w = w + step / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if v < _UNDERFLOW_FLOOR:
            if v < -neg_tol:
                raise IntegrationFailure(
                    f"profile reached V = {v:.3e} < 0; reduce the step size"
                )
            # Exponential tail exhausted: the remaining samples are zero.
            break
        V[k + 1], W[k + 1] = v, w
    return V, W


def solve_monotone(
    term: ReactionTerm, t_min: float, t_max: float, h: float
) -> Profile1D:
    """Integrate the monotone profile V'' = f(V), V(0) = T, V'(0) = 1.

    Fourth-order fixed-step integration forward and backward from 0; the grid
    is k*h for k covering [t_min, t_max].  V(t) = T + t holds exactly (to
    integrator roundoff) for t >= 0 since f vanishes above T.

    Args:
        term: reaction term (used at eps = 1).
        t_min: left end of the span, negative.
        t_max: right end of the span, positive.
        h: step size, at most 1e-2 * T.

    Returns:
        Profile1D with eps = 1 and kind "monotone".

    Raises:
        ValueError: on a malformed span or an oversized step.
        IntegrationFailure: if V turns negative beyond tolerance.
    """
    if not (t_min < 0.0 < t_max):
        raise ValueError(f"need t_min < 0 < t_max, got [{t_min}, {t_max}]")
    if not 0.0 < h <= 1e-2 * term.T:
        raise ValueError(f"step h must satisfy 0 < h <= 1e-2*T, got {h}")
    n_neg = int(np.ceil(-t_min / h - 1e-9))
    n_pos = int(np.ceil(t_max / h - 1e-9))
    # Backward integration approaches a saddle along its stable manifold, so
    # truncation error re-excites the growing mode and V can cross zero at
    # roughly the accumulated-error scale (~1e-7 at h = 1e-2).  Excursions
    # below that scale are zero-filled; only larger ones signal a bad term.
    neg_tol = 1e-5 * term.T

    V_fwd, W_fwd = _rk4_scan(term.f, term.T, 1.0, h, n_pos, neg_tol)
    V_bwd, W_bwd = _rk4_scan(term.f, term.T, 1.0, -h, n_neg, neg_tol)

    t = np.arange(-n_neg, n_pos + 1) * h
    V = np.concatenate([V_bwd[::-1], V_fwd[1:]])
    Vp = np.concatenate([W_bwd[::-1], W_fwd[1:]])
    return Profile1D(
        eps=1.0, kind="monotone", s=None, t=t, V=V, Vp=Vp, h=h, T=term.T
    )


def solve_wedge(
    term: ReactionTerm,
    eps: float,
    s: float,
    t_max: float,
    h: float,
    method: str = "first-integral",
) -> Profile1D:
    """Integrate the even wedge profile V'' = f_eps(V) with slope s at infinity.

    The default route fixes the initial height from the first integral,
    V(0) = eps * Finv(1 - s^2), V'(0) = 0, and integrates forward, mirroring
    onto [-t_max, 0].  The "shooting" route instead bisects on V(0) until the
    measured asymptotic slope matches s, and exists to cross-validate the
    first-integral construction.

    Args:
        term: reaction term.
        eps: profile scale, positive.
        s: asymptotic slope, strictly inside (0, 1).
        t_max: half-span of the sample grid, positive.
        h: step size, positive.
        method: "first-integral" (default) or "shooting".

    Returns:
        Profile1D with kind "wedge"; V(-t) = V(t) by construction.

    Raises:
        ValueError: if s is outside (0, 1) or parameters are malformed.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"wedge slope must lie in (0, 1), got {s}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not (t_max > 0 and h > 0):
        raise ValueError("t_max and h must be positive")
    if method not in ("first-integral", "shooting"):
        raise ValueError(f"unknown wedge method: {method!r}")

    def rhs(v: float) -> float:
        return term.f(v / eps) / eps

    n_pos = int(np.ceil(t_max / h - 1e-9))
    neg_tol = 1e-9 * term.T * eps

    if method == "first-integral":
        v0 = eps * term.Finv(1.0 - s * s)
    else:
        # Shoot on the initial height: the terminal slope is monotone
        # decreasing in V(0), so plain bisection is safe.
        lo, hi = 0.0, term.T * eps
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            V_try, W_try = _rk4_scan(rhs, mid, 0.0, h, n_pos, neg_tol)
            if W_try[-1] > s:
                lo = mid
            else:
                hi = mid
        v0 = 0.5 * (lo + hi)

    V_fwd, W_fwd = _rk4_scan(rhs, v0, 0.0, h, n_pos, neg_tol)
    t = np.arange(-n_pos, n_pos + 1) * h
    V = np.concatenate([V_fwd[::-1], V_fwd[1:]])
    Vp = np.concatenate([-W_fwd[::-1], W_fwd[1:]])
    return Profile1D(eps=eps, kind="wedge", s=s, t=t, V=V, Vp=Vp, h=h, T=term.T)


def first_integral_residual(p: Profile1D, term: ReactionTerm) -> float:
    """Worst violation of (V')^2 - V'(0)^2 = F(V/eps) - F(V(0)/eps) on the grid."""
    i0 = int(np.argmin(np.abs(p.t)))
    lhs = p.Vp**2 - p.Vp[i0] ** 2
    rhs = np.asarray(term.F(p.V / p.eps)) - term.F(p.V[i0] / p.eps)
    return float(np.max(np.abs(lhs - rhs)))


def rescale(p: Profile1D, eps_new: float) -> Profile1D:
    """Rescale a profile to a new eps: t -> (eps_new/eps) * V(t * eps/eps_new).

    The result is resampled on the original grid span.  Arguments that fall
    outside the stored span use affine continuation from the nearest end
    (exact wherever the reaction vanishes) clamped at 0.
    """
    if not eps_new > 0:
        raise ValueError(f"eps_new must be positive, got {eps_new}")
    lam = eps_new / p.eps
    tq = p.t / lam

    V = np.interp(tq, p.t, p.V)
    Vp = np.interp(tq, p.t, p.Vp)
    left = tq < p.t[0]
    right = tq > p.t[-1]
    V[left] = p.V[0] + p.Vp[0] * (tq[left] - p.t[0])
    Vp[left] = p.Vp[0]
    V[right] = p.V[-1] + p.Vp[-1] * (tq[right] - p.t[-1])
    Vp[right] = p.Vp[-1]
    clamped = V < 0.0
    V[clamped] = 0.0
    Vp[clamped] = 0.0

    return Profile1D(
        eps=eps_new,
        kind=p.kind,
        s=p.s,
        t=p.t.copy(),
        V=lam * V,
        Vp=Vp,
        h=p.h,
        T=p.T,
    )


def save_profile(p: Profile1D, path: str | Path) -> None:
    """Write the profile as CSV "t,V,Vp" plus a JSON metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "V", "Vp"])
        for t, v, vp in zip(p.t, p.V, p.Vp):
            writer.writerow([f"{t:.17g}", f"{v:.17g}", f"{vp:.17g}"])
    sidecar = {"eps": p.eps, "kind": p.kind, "s": p.s, "h": p.h, "T": p.T}
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def load_profile(path: str | Path) -> Profile1D:
    """Read a profile written by save_profile."""
    path = Path(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(".json").read_text())
    return Profile1D(
        eps=float(meta["eps"]),
        kind=str(meta["kind"]),
        s=None if meta["s"] is None else float(meta["s"]),
        t=rows[:, 0],
        V=rows[:, 1],
        Vp=rows[:, 2],
        h=float(meta["h"]),
        T=float(meta["T"]),
    )
