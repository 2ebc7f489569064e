"""Per-path fixed-point solver for the discretized integral equation.

With the scaled kernel ``Gt = eps^2 * G`` of the problem's boundary kind,
the solution of the stochastic boundary value problem satisfies

    x(t) = int Gt(t,s) B(s, x(s)) ds + phi(t)
    phi(t) = int Gt(t,s) f(s) ds + int Gt(t,s) delta(s) dW_s

and the map ``x -> int Gt B(., x) + phi`` contracts with constant
``theta <= sup|Gt| * beta`` whenever the declared derivative bound beta is
small enough, so Picard iteration from ``x0 = phi`` converges geometrically
and the a-posteriori distance to the fixed point is controlled by the last
update.  The derivative path is assembled from the hand-differentiated
kernel rows (finite differences would smear the diagonal jump).

The averaged drift map ``B0(x) = x + (1/p) int_0^1 B(s,x) ds`` is strictly
increasing with slope at least ``1 - beta/p``; its inverse (bisection
bracket plus safeguarded Newton) supplies the constant limit
``zeta = B0^{-1}(eta)`` used by the convergence experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .greens import KernelTable
from .model import BoundaryKind, Grid, ProblemSpec
from .stochastic import BrownianPath

__all__ = [
    "NoContraction",
    "MaxIterExceeded",
    "BracketError",
    "CONTRACTION_LIMIT",
    "SolutionPath",
    "forcing_path",
    "contraction_bound",
    "picard_solve",
    "B0Function",
    "invert_B0",
    "SdeResidualReport",
    "verify_sde",
]

# Require some slack below 1: near the theoretical edge the iteration is
# too slow to be useful and the stopping bound degenerates.
CONTRACTION_LIMIT = 0.95


class NoContraction(RuntimeError):
    """A-priori contraction estimate too large; eps exceeds the usable range."""

    def __init__(self, bound: float):
        super().__init__(
            f"contraction bound {bound:.6g} exceeds {CONTRACTION_LIMIT}; "
            "reduce eps (or beta) before solving"
        )
        self.bound = bound


class MaxIterExceeded(RuntimeError):
    """Fixed-point iteration did not reach its tolerance."""


class BracketError(RuntimeError):
    """Root bracket for the averaged drift map failed.

    The bracket ``[a - beta_star/p, a + beta_star/p]`` is valid whenever
    ``|B| <= beta_star`` actually holds, so a failure here signals a
    dishonest declared bound.
    """


@dataclass(frozen=True)
class SolutionPath:
    """Grid-sampled solution with iteration diagnostics.

    ``theta_est`` is the largest measured update ratio
    ``|x_{k+1}-x_k| / |x_k-x_{k-1}|``; ``final_residual`` the sup norm of
    the last update; ``bc_residual`` the endpoint-condition defect of the
    declared boundary kind.
    """

    grid: Grid
    eps: float
    boundary: BoundaryKind
    x: np.ndarray
    xdot: np.ndarray
    iterations: int
    final_residual: float
    theta_est: float
    bc_residual: float
    update_ratios: tuple

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "theta_est": self.theta_est,
            "bc_residual": self.bc_residual,
        }


def _table_for(spec: ProblemSpec, eps: float, grid: Grid, table: KernelTable | None) -> KernelTable:
    if table is None:
        return KernelTable.build(spec.boundary, eps, spec.p, grid)
    if table.kind is not spec.boundary or table.grid.n != grid.n or table.eps != eps or table.p != spec.p:
        raise ValueError("kernel table does not match (boundary, eps, p, grid)")
    return table


def _noise_weights(spec: ProblemSpec, path: BrownianPath) -> np.ndarray:
    d = np.asarray(spec.delta(path.grid.points), dtype=float)
    return d[: path.grid.n] * path.increments


def forcing_path(spec: ProblemSpec, eps: float, path: BrownianPath, table: KernelTable | None = None) -> np.ndarray:
    """Affine part ``phi`` of the fixed-point equation, sampled on the grid."""
    table = _table_for(spec, eps, path.grid, table)
    f_vals = np.asarray(spec.f(path.grid.points), dtype=float)
    return eps * eps * (table.apply_value(f_vals) + table.ito_value(_noise_weights(spec, path)))


def contraction_bound(spec: ProblemSpec, eps: float, grid: Grid | None = None, table: KernelTable | None = None) -> float:
    """A-priori Lipschitz bound of the Picard map: ``sup|Gt| * beta``."""
    if table is None:
        table = KernelTable.build(spec.boundary, eps, spec.p, grid if grid is not None else Grid(256))
    return eps * eps * table.sup_abs * spec.beta


def _bc_residual(kind: BoundaryKind, x: np.ndarray, xdot: np.ndarray) -> float:
    if kind is BoundaryKind.FIRST_KIND:
        return float(max(abs(x[0]), abs(x[-1])))
    if kind is BoundaryKind.SECOND_KIND:
        return float(max(abs(xdot[0]), abs(xdot[-1])))
    return float(max(abs(x[0] - x[-1]), abs(xdot[0] - xdot[-1])))


def picard_solve(
    spec: ProblemSpec,
    eps: float,
    path: BrownianPath,
    tol: float = 1e-10,
    max_iter: int = 200,
    table: KernelTable | None = None,
    x0: np.ndarray | None = None,
) -> SolutionPath:
    """Iterate ``x <- int Gt B(., x) ds + phi`` to its unique fixed point.

    Starts from ``x0 = phi`` (the exact fixed point when B vanishes) and
    stops when the sup-norm update falls below ``tol * (1 - theta)``, which
    bounds the distance to the fixed point by ``tol``.  Raises
    :class:`NoContraction` when the a-priori bound exceeds
    ``CONTRACTION_LIMIT`` and :class:`MaxIterExceeded` on stall.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = path.grid
    table = _table_for(spec, eps, grid, table)
    theta = contraction_bound(spec, eps, table=table)
    if theta > CONTRACTION_LIMIT:
        raise NoContraction(theta)

    pts = grid.points
    e2 = eps * eps
    f_vals = np.asarray(spec.f(pts), dtype=float)
    y = _noise_weights(spec, path)
    phi = e2 * (table.apply_value(f_vals) + table.ito_value(y))

    x = phi.copy() if x0 is None else np.array(x0, dtype=float)
    stop = tol * (1.0 - theta)
    ratios = []
    prev_update = None
    iterations = None
    for k in range(1, max_iter + 1):
        x_next = e2 * table.apply_value(np.asarray(spec.B(pts, x), dtype=float)) + phi
        update = float(np.max(np.abs(x_next - x)))
        x = x_next
        if prev_update is not None and prev_update > 0.0:
            ratios.append(update / prev_update)
        if update < stop:
            iterations = k
            break
        prev_update = update
    if iterations is None:
        raise MaxIterExceeded(
            f"no convergence in {max_iter} iterations (last update {update:.3g}, "
            f"target {stop:.3g}, bound {theta:.3g})"
        )

    integrand = np.asarray(spec.B(pts, x), dtype=float) + f_vals
    xdot = e2 * (table.apply_deriv(integrand) + table.ito_deriv(y))
    x.flags.writeable = False
    xdot.flags.writeable = False
    return SolutionPath(
        grid=grid,
        eps=eps,
        boundary=spec.boundary,
        x=x,
        xdot=xdot,
        iterations=iterations,
        final_residual=update,
        theta_est=max(ratios) if ratios else 0.0,
        bc_residual=_bc_residual(spec.boundary, x, xdot),
        update_ratios=tuple(ratios),
    )


class B0Function:
    """Averaged drift map ``B0(x) = x + (1/p) int_0^1 B(s, x) ds``.

    The s-integral is a cached trapezoid lattice; the map is strictly
    increasing with derivative ``1 + (1/p) int B_x(s,x) ds >= 1 - beta/p``.
    """

    def __init__(self, spec: ProblemSpec, quad_n: int = 256):
        self.spec = spec
        grid = Grid(quad_n)
        self._s = grid.points[:, None]
        self._w = grid.trapezoid_weights

    def __call__(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = x_arr + (self._w @ np.asarray(self.spec.B(self._s, x_arr[None, :]), dtype=float)) / self.spec.p
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def derivative(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = 1.0 + (self._w @ np.asarray(self.spec.B_x(self._s, x_arr[None, :]), dtype=float)) / self.spec.p
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def inverse(self, a: float, tol: float = 1e-12, max_iter: int = 200) -> float:
        """Unique root of ``B0(x) = a`` via bracketed, safeguarded Newton.

        Since ``|B0(x) - x| <= beta_star / p`` the root lies in
        ``[a - beta_star/p, a + beta_star/p]``; Newton steps are accepted
        only inside the current bracket, otherwise bisect.  Terminates with
        ``|B0(result) - a| <= tol``.
        """
        # the analytic bracket is tight when B0(x) - x hits its bound, so pad
        # it slightly against quadrature and rounding error
        half = self.spec.beta_star / self.spec.p + 1e-9 * (1.0 + abs(a))
        lo, hi = a - half, a + half
        if not np.isfinite(lo) or not np.isfinite(hi):
            raise BracketError("declared beta_star is not finite; cannot bracket the root")
        f_lo, f_hi = self(lo) - a, self(hi) - a
        if f_lo > 0 or f_hi < 0:
            raise BracketError(
                f"B0 bracket [{lo:.6g}, {hi:.6g}] does not straddle {a:.6g}; "
                "the declared beta_star bound appears violated"
            )
        x = 0.5 * (lo + hi)
        for _ in range(max_iter):
            fx = self(x) - a
            if abs(fx) <= tol:
                return x
            if fx > 0:
                hi = x
            else:
                lo = x
            slope = self.derivative(x)
            step = x - fx / slope if slope > 0 else None
            x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        raise MaxIterExceeded(f"B0 inversion stalled before reaching |B0(x)-a| <= {tol}")


def invert_B0(spec: ProblemSpec, a: float, tol: float = 1e-12, b0: B0Function | None = None) -> float:
    """Convenience wrapper: root of ``B0(x) = a`` for this spec."""
    return (b0 if b0 is not None else B0Function(spec)).inverse(a, tol=tol)


@dataclass(frozen=True)
class SdeResidualReport:
    max_residual: float
    residuals: np.ndarray


def verify_sde(
    spec: ProblemSpec,
    eps: float,
    path: BrownianPath,
    sol: SolutionPath,
    table: KernelTable | None = None,
) -> SdeResidualReport:
    """Check the integrated equation on the grid.

    Compares ``xdot(t_k) - xdot(0)`` with
    ``eps^2 * [ int_0^{t_k} (p x + B(s,x) + f) ds + sum_{j<k} delta dW_j ]``;
    the deviation is first order in the grid spacing.
    """
    if sol.grid.n != path.grid.n:
        raise ValueError("solution and path must share a grid")
    grid = path.grid
    pts = grid.points
    drift = spec.p * sol.x + np.asarray(spec.B(pts, sol.x), dtype=float) + np.asarray(spec.f(pts), dtype=float)
    lhs = sol.xdot - sol.xdot[0]
    noise_cum = np.concatenate(([0.0], np.cumsum(_noise_weights(spec, path))))
    rhs = eps * eps * (cumulative_trapezoid(drift, dx=grid.h, initial=0.0) + noise_cum)
    residuals = lhs - rhs
    return SdeResidualReport(max_residual=float(np.max(np.abs(residuals))), residuals=residuals)
