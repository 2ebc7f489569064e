"""Closed-form Green kernels for ``u'' - eps^2*p*u`` on [0, 1].

For each boundary kind there is one kernel ``G(t, s)`` such that
``x(t) = int_0^1 G(t,s) f(s) ds`` solves ``x'' - eps^2*p*x = f`` with the
corresponding end conditions.  The defining properties are

  1. continuity across the diagonal,
  2. the homogeneous equation off the diagonal,
  3. symmetry ``G(t,s) = G(s,t)``,
  4. a unit jump of the t-derivative across ``t = s``,
  5. the boundary conditions in ``t`` for every fixed ``s``,

and :func:`certify_green` verifies all five numerically.

Everything is written with ``a = eps*sqrt(p)`` and the stable primitive
``1 - exp(-x) = -expm1(-x)`` so the small-``eps`` limits (where the raw
formulas become 0/0) evaluate without cancellation.  Derivatives are
differentiated by hand from the closed forms, never by finite differences:
the unit jump at the diagonal is exact, and the split-triangle storage in
:class:`KernelTable` lets quadrature integrate up to the kink at ``t = s``
without interpolating across it.

The limits as ``eps -> 0``: the value-pinned kernel tends to
``upsilon(t,s) = -min(t,s)*(1-max(t,s))`` while ``eps^2 * G`` tends to the
constant ``-1/p`` for the derivative-pinned and periodic kernels;
:func:`sup_norm_diff` measures the distance to these limits.

Two candidate closed forms exist for the derivative-pinned (second-kind)
kernel, differing in one exponent of the ``g4`` factor:

  * ``"reflected"`` uses ``1 + exp(-2a(1-max(t,s)))`` (equivalently the
    product of ``cosh(a*min)`` and ``cosh(a*(1-max))`` homogeneous
    solutions).  It certifies.
  * ``"plain_max"`` uses ``1 + exp(-2a*max(t,s))``.  It fails the end
    condition at ``t = 1``, the off-diagonal equation for ``t > s`` and
    the unit jump, and is kept only so certification can arbitrate.

``eps = 0`` is not a valid kernel argument (the formulas degenerate);
callers use :func:`upsilon` or the ``-1/p`` constant explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import BoundaryKind, Grid

__all__ = [
    "NEUMANN_FORMS",
    "upsilon",
    "green_eval",
    "green_dt",
    "KernelTable",
    "GreenCheck",
    "GreenCertification",
    "certify_green",
    "sup_norm_diff",
]

NEUMANN_FORMS = ("reflected", "plain_max")

FROM_BELOW = "from_below"
FROM_ABOVE = "from_above"


def _em(x):
    """1 - exp(-x) without cancellation for small x."""
    return -np.expm1(-x)


def _cp(x):
    """1 + exp(-x)."""
    return 1.0 + np.exp(-x)


def _check_domain(eps: float, p: float, *coords) -> float:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps} (use the explicit limit objects for eps=0)")
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    for c in coords:
        c = np.asarray(c)
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("t and s must lie in [0, 1]")
    return eps * math.sqrt(p)


def _resolve_form(kind: BoundaryKind, neumann_form: str) -> str:
    if neumann_form not in NEUMANN_FORMS:
        raise ValueError(f"neumann_form must be one of {NEUMANN_FORMS}, got {neumann_form!r}")
    return neumann_form


class _Forms:
    """Branch-wise closed forms: lower means t >= s, upper means t <= s.

    Each method accepts broadcastable arrays and is well defined on the
    whole square; only the matching triangle is meaningful.  ``dtt`` are
    the hand-differentiated second derivatives used by the certification
    check of the off-diagonal equation.
    """

    def __init__(self, kind: BoundaryKind, a: float, neumann_form: str = "reflected"):
        self.kind = kind
        self.a = a
        self.form = _resolve_form(kind, neumann_form)

    # -- values ------------------------------------------------------------
    def val_lower(self, t, s):
        a = self.a
        if self.kind is BoundaryKind.FIRST_KIND:
            return -np.exp(-a * (t - s)) * _em(2 * a * s) * _em(2 * a * (1 - t)) / (2 * a * _em(2 * a))
        if self.kind is BoundaryKind.SECOND_KIND:
            if self.form == "reflected":
                g4 = _cp(2 * a * (1 - t))
            else:
                g4 = _cp(2 * a * t)
            return -np.exp(-a * (t - s)) * _cp(2 * a * s) * g4 / (2 * a * _em(2 * a))
        tau = t - s
        return -(np.exp(-a * tau) + np.exp(-a * (1 - tau))) / (2 * a * _em(a))

    def val_upper(self, t, s):
        a = self.a
        if self.kind is BoundaryKind.FIRST_KIND:
            return -np.exp(-a * (s - t)) * _em(2 * a * t) * _em(2 * a * (1 - s)) / (2 * a * _em(2 * a))
        if self.kind is BoundaryKind.SECOND_KIND:
            if self.form == "reflected":
                g4 = _cp(2 * a * (1 - s))
            else:
                g4 = _cp(2 * a * s)
            return -np.exp(-a * (s - t)) * _cp(2 * a * t) * g4 / (2 * a * _em(2 * a))
        tau = s - t
        return -(np.exp(-a * tau) + np.exp(-a * (1 - tau))) / (2 * a * _em(a))

    # -- first t-derivatives -----------------------------------------------
    def dt_lower(self, t, s):
        a = self.a
        if self.kind is BoundaryKind.FIRST_KIND:
            return _em(2 * a * s) * (np.exp(-a * (t - s)) + np.exp(-a * ((1 - t) + (1 - s)))) / (2 * _em(2 * a))
        if self.kind is BoundaryKind.SECOND_KIND:
            if self.form == "reflected":
                return _cp(2 * a * s) * (np.exp(-a * (t - s)) - np.exp(-a * ((1 - t) + (1 - s)))) / (2 * _em(2 * a))
            return _cp(2 * a * s) * (np.exp(-a * (t - s)) + 3.0 * np.exp(-a * (3 * t - s))) / (2 * _em(2 * a))
        tau = t - s
        return (np.exp(-a * tau) - np.exp(-a * (1 - tau))) / (2 * _em(a))

    def dt_upper(self, t, s):
        a = self.a
        if self.kind is BoundaryKind.FIRST_KIND:
            return -_em(2 * a * (1 - s)) * (np.exp(-a * (s - t)) + np.exp(-a * (s + t))) / (2 * _em(2 * a))
        if self.kind is BoundaryKind.SECOND_KIND:
            if self.form == "reflected":
                return -_cp(2 * a * (1 - s)) * (np.exp(-a * (s - t)) - np.exp(-a * (s + t))) / (2 * _em(2 * a))
            return -_cp(2 * a * s) * (np.exp(-a * (s - t)) - np.exp(-a * (s + t))) / (2 * _em(2 * a))
        tau = s - t
        return -(np.exp(-a * tau) - np.exp(-a * (1 - tau))) / (2 * _em(a))

    # -- second t-derivatives ----------------------------------------------
    def dtt_lower(self, t, s):
        a = self.a
        if self.kind is BoundaryKind.FIRST_KIND:
            return a * _em(2 * a * s) * (np.exp(-a * ((1 - t) + (1 - s))) - np.exp(-a * (t - s))) / (2 * _em(2 * a))
        if self.kind is BoundaryKind.SECOND_KIND:
            if self.form == "reflected":
                return -a * _cp(2 * a * s) * (np.exp(-a * (t - s)) + np.exp(-a * ((1 - t) + (1 - s)))) / (2 * _em(2 * a))
            return -a * _cp(2 * a * s) * (np.exp(-a * (t - s)) + 9.0 * np.exp(-a * (3 * t - s))) / (2 * _em(2 * a))
        tau = t - s
        return -a * (np.exp(-a * tau) + np.exp(-a * (1 - tau))) / (2 * _em(a))

    def dtt_upper(self, t, s):
        a = self.a
        if self.kind is BoundaryKind.FIRST_KIND:
            return -a * _em(2 * a * (1 - s)) * (np.exp(-a * (s - t)) - np.exp(-a * (s + t))) / (2 * _em(2 * a))
        if self.kind is BoundaryKind.SECOND_KIND:
            if self.form == "reflected":
                return -a * _cp(2 * a * (1 - s)) * (np.exp(-a * (s - t)) + np.exp(-a * (s + t))) / (2 * _em(2 * a))
            return -a * _cp(2 * a * s) * (np.exp(-a * (s - t)) + np.exp(-a * (s + t))) / (2 * _em(2 * a))
        tau = s - t
        return -a * (np.exp(-a * tau) + np.exp(-a * (1 - tau))) / (2 * _em(a))


def upsilon(t, s):
    """Limit kernel ``-min(t,s) * (1 - max(t,s))`` on the unit square.

    Vanishes on the boundary rows/columns, is symmetric and nonpositive.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(t > 1) or np.any(s < 0) or np.any(s > 1):
        raise ValueError("t and s must lie in [0, 1]")
    out = -np.minimum(t, s) * (1.0 - np.maximum(t, s))
    return out if out.ndim else float(out)


def green_eval(kind: BoundaryKind, eps: float, p: float, t, s, *, neumann_form: str = "reflected"):
    """Kernel value ``G(t, s)`` for the given boundary kind."""
    a = _check_domain(eps, p, t, s)
    forms = _Forms(kind, a, neumann_form)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    out = np.where(t >= s, forms.val_lower(t, s), forms.val_upper(t, s))
    return out if out.ndim else float(out)


def green_dt(kind: BoundaryKind, eps: float, p: float, t, s, side: str = FROM_ABOVE, *, neumann_form: str = "reflected"):
    """One-sided t-derivative of the kernel.

    Off the diagonal the derivative is unambiguous and ``side`` is
    ignored; at ``t == s`` it selects the limit taken from ``t > s``
    ("from_above") or ``t < s`` ("from_below").  The two sides differ by
    exactly one (the unit jump).
    """
    if side not in (FROM_BELOW, FROM_ABOVE):
        raise ValueError(f"side must be '{FROM_BELOW}' or '{FROM_ABOVE}', got {side!r}")
    a = _check_domain(eps, p, t, s)
    forms = _Forms(kind, a, neumann_form)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    lo = forms.dt_lower(t, s)
    up = forms.dt_upper(t, s)
    diag = lo if side == FROM_ABOVE else up
    out = np.where(t > s, lo, np.where(t < s, up, diag))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelTable:
    """Grid-sampled kernel with split storage across the diagonal.

    ``lower[i, j]`` holds the ``t >= s`` branch at ``(t_i, s_j)`` and
    ``upper[i, j]`` the ``t <= s`` branch; the diagonal is stored in both
    (the kernel is continuous there, the derivative tables are not).  The
    quadrature helpers split deterministic integrals at the diagonal node
    and pick the region-consistent branch for left-endpoint Ito sums, so
    the derivative kink is never interpolated across.
    """

    kind: BoundaryKind
    eps: float
    p: float
    grid: Grid
    neumann_form: str
    lower: np.ndarray
    upper: np.ndarray
    dt_lower: np.ndarray
    dt_upper: np.ndarray

    @classmethod
    def build(cls, kind: BoundaryKind, eps: float, p: float, grid: Grid, *, neumann_form: str = "reflected") -> "KernelTable":
        if eps > 1.0:
            raise ValueError(f"kernel tables cover the small-parameter regime eps in (0, 1], got {eps}")
        a = _check_domain(eps, p)
        forms = _Forms(kind, a, neumann_form)
        pts = grid.points
        T = pts[:, None]
        S = pts[None, :]
        table = cls(
            kind=kind,
            eps=eps,
            p=p,
            grid=grid,
            neumann_form=forms.form,
            lower=forms.val_lower(T, S),
            upper=forms.val_upper(T, S),
            dt_lower=forms.dt_lower(T, S),
            dt_upper=forms.dt_upper(T, S),
        )
        for arr in (table.lower, table.upper, table.dt_lower, table.dt_upper):
            arr.flags.writeable = False
        return table

    @cached_property
    def values(self) -> np.ndarray:
        """Combined value table (lower triangle from the lower branch)."""
        n1 = self.grid.n + 1
        i = np.arange(n1)
        mask = i[:, None] >= i[None, :]
        out = np.where(mask, self.lower, self.upper)
        out.flags.writeable = False
        return out

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    @cached_property
    def _quad_matrix(self) -> np.ndarray:
        out = self.values * self.grid.trapezoid_weights[None, :]
        out.flags.writeable = False
        return out

    @cached_property
    def _deriv_quad_matrix(self) -> np.ndarray:
        # Split trapezoid: row i integrates [0, t_i] with the lower branch
        # and [t_i, 1] with the upper branch, both weighted h*[1/2,1,..,1,1/2].
        n = self.grid.n
        h = self.grid.h
        wl = np.tril(np.full((n + 1, n + 1), h))
        wl[:, 0] *= 0.5
        wl[np.diag_indices(n + 1)] *= 0.5
        wl[0, :] = 0.0
        wu = np.triu(np.full((n + 1, n + 1), h))
        wu[:, n] *= 0.5
        wu[np.diag_indices(n + 1)] *= 0.5
        wu[n, :] = 0.0
        out = self.dt_lower * wl + self.dt_upper * wu
        out.flags.writeable = False
        return out

    @cached_property
    def _ito_deriv_matrix(self) -> np.ndarray:
        # Left endpoint t_j of increment j lies in [t_j, t_j + h): row i uses
        # the lower branch for j < i and the upper branch for j >= i.
        n = self.grid.n
        i = np.arange(n + 1)[:, None]
        j = np.arange(n)[None, :]
        out = np.where(j < i, self.dt_lower[:, :n], self.dt_upper[:, :n])
        out.flags.writeable = False
        return out

    def apply_value(self, fvals: np.ndarray) -> np.ndarray:
        """Trapezoid of ``G(t_i, .) * f`` for every row ``t_i``."""
        return self._quad_matrix @ np.asarray(fvals, dtype=float)

    def apply_deriv(self, fvals: np.ndarray) -> np.ndarray:
        """Split trapezoid of ``dG/dt(t_i, .) * f`` for every row."""
        return self._deriv_quad_matrix @ np.asarray(fvals, dtype=float)

    def ito_value(self, weighted_increments: np.ndarray) -> np.ndarray:
        """Left-endpoint Ito sums ``sum_j G(t_i, t_j) y_j`` per row."""
        y = np.asarray(weighted_increments, dtype=float)
        if y.shape[0] != self.grid.n:
            raise ValueError(f"expected {self.grid.n} increments, got {y.shape[0]}")
        return self.values[:, : self.grid.n] @ y

    def ito_deriv(self, weighted_increments: np.ndarray) -> np.ndarray:
        """Left-endpoint Ito sums against the branch-consistent derivative."""
        y = np.asarray(weighted_increments, dtype=float)
        if y.shape[0] != self.grid.n:
            raise ValueError(f"expected {self.grid.n} increments, got {y.shape[0]}")
        return self._ito_deriv_matrix @ y


@dataclass(frozen=True)
class GreenCheck:
    name: str
    passed: bool
    residual: float
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class GreenCertification:
    kind: BoundaryKind
    eps: float
    p: float
    n: int
    neumann_form: str
    checks: tuple

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> GreenCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "eps": self.eps,
            "p": self.p,
            "n": self.n,
            "neumann_form": self.neumann_form,
            "all_pass": self.all_pass,
            "checks": [c.as_dict() for c in self.checks],
        }


def _certify_arrays(
    kind: BoundaryKind,
    eps: float,
    p: float,
    grid: Grid,
    lower: np.ndarray,
    upper: np.ndarray,
    dt_lower: np.ndarray,
    dt_upper: np.ndarray,
    dtt_lower: np.ndarray,
    dtt_upper: np.ndarray,
    *,
    continuity_tol: float = 1e-12,
    ode_tol: float = 1e-8,
    symmetry_tol: float = 1e-12,
    jump_tol: float = 1e-10,
    bc_tol: float = 1e-10,
) -> tuple:
    n = grid.n
    idx = np.arange(n + 1)
    mask_lo = idx[:, None] >= idx[None, :] + 2
    mask_up = idx[None, :] >= idx[:, None] + 2

    continuity = float(np.max(np.abs(np.diagonal(lower) - np.diagonal(upper))))

    a_sq = eps * eps * p
    res_lo = np.abs(dtt_lower - a_sq * lower) / (1.0 + np.abs(lower))
    res_up = np.abs(dtt_upper - a_sq * upper) / (1.0 + np.abs(upper))
    ode = float(max(np.max(res_lo[mask_lo]), np.max(res_up[mask_up])))

    values = np.where(idx[:, None] >= idx[None, :], lower, upper)
    symmetry = float(np.max(np.abs(values - values.T)))

    jump = float(np.max(np.abs(np.diagonal(dt_lower) - np.diagonal(dt_upper) - 1.0)))

    if kind is BoundaryKind.FIRST_KIND:
        bc = float(max(np.max(np.abs(values[0, :])), np.max(np.abs(values[n, :]))))
    elif kind is BoundaryKind.SECOND_KIND:
        # row 0 integrates entirely through the upper branch, row n through
        # the lower branch (split convention), so these are the derivative
        # values quadrature actually sees at the ends.
        bc = float(max(np.max(np.abs(dt_upper[0, :])), np.max(np.abs(dt_lower[n, :]))))
    else:
        bc_val = np.max(np.abs(values[0, :] - values[n, :]))
        bc_dt = np.max(np.abs(dt_upper[0, :] - dt_lower[n, :]))
        bc = float(max(bc_val, bc_dt))

    return (
        GreenCheck("continuity", continuity <= continuity_tol, continuity, continuity_tol),
        GreenCheck("ode_off_diagonal", ode <= ode_tol, ode, ode_tol),
        GreenCheck("symmetry", symmetry <= symmetry_tol, symmetry, symmetry_tol),
        GreenCheck("derivative_jump", jump <= jump_tol, jump, jump_tol),
        GreenCheck("boundary_conditions", bc <= bc_tol, bc, bc_tol),
    )


def certify_green(kind: BoundaryKind, eps: float, p: float, grid: Grid, *, neumann_form: str = "reflected") -> GreenCertification:
    """Numerically certify the five defining kernel properties on a grid.

    Failures are reported, not raised.  The off-diagonal equation check
    uses the hand-differentiated second derivative and excludes the two
    bands adjacent to the diagonal.
    """
    a = _check_domain(eps, p)
    forms = _Forms(kind, a, neumann_form)
    pts = grid.points
    T, S = pts[:, None], pts[None, :]
    checks = _certify_arrays(
        kind,
        eps,
        p,
        grid,
        forms.val_lower(T, S),
        forms.val_upper(T, S),
        forms.dt_lower(T, S),
        forms.dt_upper(T, S),
        forms.dtt_lower(T, S),
        forms.dtt_upper(T, S),
    )
    return GreenCertification(kind=kind, eps=eps, p=p, n=grid.n, neumann_form=forms.form, checks=checks)


def sup_norm_diff(kind: BoundaryKind, eps: float, p: float, grid: Grid, *, neumann_form: str = "reflected") -> tuple:
    """Distance of the kernel from its small-``eps`` limit on the grid.

    Returns ``(d0, d1)``, both of which tend to zero as ``eps -> 0``:

    * value-pinned kind: ``d0 = max |G - upsilon|`` over all grid pairs and
      ``d1 = max |dG/dt - d(upsilon)/dt|`` over strictly off-diagonal pairs;
    * derivative-pinned / periodic kinds: ``d0 = max |eps^2 G + 1/p|`` and
      ``d1 = eps^2 * max |dG/dt|`` off the diagonal.
    """
    if grid.n < 64:
        raise ValueError(f"sup_norm_diff needs grid resolution >= 64, got n={grid.n}")
    table = KernelTable.build(kind, eps, p, grid, neumann_form=neumann_form)
    pts = grid.points
    T, S = pts[:, None], pts[None, :]
    idx = np.arange(grid.n + 1)
    strict_lo = idx[:, None] > idx[None, :]
    strict_up = idx[:, None] < idx[None, :]

    if kind is BoundaryKind.FIRST_KIND:
        d0 = float(np.max(np.abs(table.values - upsilon(T, S))))
        dlim_lo = np.broadcast_to(S, table.dt_lower.shape)          # d(upsilon)/dt for t > s
        dlim_up = np.broadcast_to(-(1.0 - S), table.dt_upper.shape)  # and for t < s
        d1 = float(
            max(
                np.max(np.abs((table.dt_lower - dlim_lo)[strict_lo])),
                np.max(np.abs((table.dt_upper - dlim_up)[strict_up])),
            )
        )
    else:
        scaled = eps * eps * table.values
        d0 = float(np.max(np.abs(scaled + 1.0 / p)))
        d1 = eps * eps * float(
            max(
                np.max(np.abs(table.dt_lower[strict_lo])),
                np.max(np.abs(table.dt_upper[strict_up])),
            )
        )
    return d0, d1
