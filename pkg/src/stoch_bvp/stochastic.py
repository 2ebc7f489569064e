"""Seeded Brownian paths, Ito quadrature and the averaging limit objects.

Conventions, fixed once for the whole library:

* Stochastic integrals are left-endpoint Ito sums,
  ``int k dW ~= sum_j k(t_j) delta(t_j) dW_j``.
* Deterministic ``ds`` integrals are composite trapezoid sums; kernels with
  a derivative kink at ``t = s`` are integrated split at the diagonal node
  (see :class:`stoch_bvp.greens.KernelTable`).
* Randomness comes from a counter-based generator (Philox) keyed by
  ``(seed, stream)``, with normals drawn by inverse CDF of uniforms, so
  paths are reproducible bit-for-bit and Monte Carlo batches are
  order-independent across workers.

The limit objects defined here:

* ``kappa(t)``: the limit of ``x/eps^2`` under value-pinned ends,
  ``int upsilon(t,s)(B(s,0)+f(s)) ds + int upsilon(t,s) delta(s) dW_s``.
* ``eta``: the averaged random forcing
  ``-(1/p) int f ds - (1/p) int delta dW``; the constant limit for
  derivative-pinned and periodic ends is ``B0^{-1}(eta)`` (solver module).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import ndtri

from .greens import KernelTable, upsilon
from .model import Grid, ProblemSpec

__all__ = [
    "BrownianPath",
    "sample_path",
    "ito_integral",
    "KappaPath",
    "kappa",
    "EtaValue",
    "eta",
    "check_ito_lemma",
    "BridgeCovarianceCell",
    "BridgeCovarianceReport",
    "brownian_bridge_check",
]

_U53 = float(2**53)


@dataclass(frozen=True)
class BrownianPath:
    """Increments of one Brownian path over a uniform grid.

    ``increments[j] ~ N(0, h)`` spans ``[t_j, t_{j+1}]``; ``values`` are the
    cumulative sums with ``W(0) = 0``.  Same ``(seed, stream, n)`` always
    reproduces the same increments bit-for-bit.
    """

    grid: Grid
    increments: np.ndarray
    seed: int
    stream: int = 0

    def __post_init__(self):
        if len(self.increments) != self.grid.n:
            raise ValueError(f"expected {self.grid.n} increments, got {len(self.increments)}")

    @cached_property
    def values(self) -> np.ndarray:
        w = np.concatenate(([0.0], np.cumsum(self.increments)))
        w.flags.writeable = False
        return w

    def coarsen(self) -> "BrownianPath":
        """The same underlying path on a grid with half the resolution.

        Adjacent increment pairs are summed, which couples the two
        discretizations of one Brownian path; refinement studies (does the
        residual halve when n doubles?) use this so the comparison is not
        polluted by resampling noise.
        """
        if self.grid.n % 2 != 0:
            raise ValueError("coarsen needs an even number of intervals")
        inc = self.increments[0::2] + self.increments[1::2]
        return BrownianPath(grid=Grid(self.grid.n // 2), increments=inc, seed=self.seed, stream=self.stream)


def sample_path(n: int, seed: int, stream: int = 0) -> BrownianPath:
    """Draw a Brownian path on ``Grid(n)`` from the ``(seed, stream)`` key.

    Uniforms come from Philox (counter-based, so streams are independent
    and order-free); normals via the inverse-CDF rational approximation,
    which is deterministic across platforms.  Uniforms are centered to
    ``(k + 0.5) / 2^53`` so the inverse CDF never sees 0 or 1.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not (0 <= seed < 2**64 and 0 <= stream < 2**64):
        raise ValueError("seed and stream must fit in 64 bits")
    grid = Grid(n)
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))
    u = (gen.integers(0, 2**53, size=n, dtype=np.uint64).astype(np.float64) + 0.5) / _U53
    inc = np.sqrt(grid.h) * ndtri(u)
    inc.flags.writeable = False
    return BrownianPath(grid=grid, increments=inc, seed=seed, stream=stream)


def _scalar_values(fn_or_values, pts: np.ndarray) -> np.ndarray:
    if callable(fn_or_values):
        return np.asarray(fn_or_values(pts), dtype=float)
    return np.asarray(fn_or_values, dtype=float)


def ito_integral(kernel_row, delta, path: BrownianPath) -> float:
    """Left-endpoint Ito sum ``sum_j k(t_j) delta(t_j) dW_j``.

    ``kernel_row`` holds the kernel sampled at all n+1 grid points (only
    the left endpoints enter); ``delta`` may be a callable or an array.
    """
    n = path.grid.n
    k = np.asarray(kernel_row, dtype=float)
    if k.shape[0] != n + 1:
        raise ValueError(f"kernel_row must have {n + 1} samples, got {k.shape[0]}")
    d = _scalar_values(delta, path.grid.points)
    if d.shape[0] != n + 1:
        raise ValueError(f"delta must have {n + 1} samples, got {d.shape[0]}")
    return float(np.sum(k[:n] * d[:n] * path.increments))


@dataclass(frozen=True)
class KappaPath:
    """Grid samples of the scaled value-pinned limit process."""

    grid: Grid
    values: np.ndarray
    path: BrownianPath

    def __post_init__(self):
        # vanishing end values are structural: upsilon(0,.) = upsilon(1,.) = 0
        if self.values[0] != 0.0 or self.values[-1] != 0.0:
            raise ValueError("kappa must vanish at both ends")


def kappa(spec: ProblemSpec, path: BrownianPath) -> KappaPath:
    """Limit process ``int ups*(B(.,0)+f) ds + int ups*delta dW`` per grid t."""
    grid = path.grid
    pts = grid.points
    U = upsilon(pts[:, None], pts[None, :])
    drift = np.asarray(spec.B(pts, np.zeros_like(pts)), dtype=float) + np.asarray(spec.f(pts), dtype=float)
    det = U @ (grid.trapezoid_weights * drift)
    noise = U[:, : grid.n] @ (np.asarray(spec.delta(pts), dtype=float)[: grid.n] * path.increments)
    vals = det + noise
    vals.flags.writeable = False
    return KappaPath(grid=grid, values=vals, path=path)


@dataclass(frozen=True)
class EtaValue:
    """The averaged random forcing and its two parts."""

    value: float
    drift_part: float
    noise_part: float
    path: BrownianPath


def eta(spec: ProblemSpec, path: BrownianPath) -> EtaValue:
    """``-(1/p) int f ds - (1/p) int delta dW`` on the path's grid."""
    grid = path.grid
    pts = grid.points
    f_vals = np.asarray(spec.f(pts), dtype=float)
    d_vals = np.asarray(spec.delta(pts), dtype=float)
    drift_part = -float(grid.trapezoid_weights @ f_vals) / spec.p
    noise_part = -float(np.sum(d_vals[: grid.n] * path.increments)) / spec.p
    return EtaValue(value=drift_part + noise_part, drift_part=drift_part, noise_part=noise_part, path=path)


def check_ito_lemma(table: KernelTable, delta, path: BrownianPath) -> float:
    """Residual between two routes to ``xi(t) = int G(t,s) delta(s) dW_s``.

    Route (a) evaluates the Ito sum directly per grid t.  Route (b) uses
    the differential form: since the kernel value has no jump across the
    diagonal, ``xi(t) = xi(0) + int_0^t D(u) du`` with
    ``D(u) = int dG/dt(u,v) delta(v) dW_v``, where the derivative rows take
    the region-consistent one-sided branch (an increment starting at the
    diagonal belongs to ``v > u``).  Returns ``max_t |a - b|``; first order
    in the grid spacing.
    """
    if table.grid.n != path.grid.n:
        raise ValueError("kernel table and path must share a grid")
    d = _scalar_values(delta, path.grid.points)
    y = d[: path.grid.n] * path.increments
    direct = table.ito_value(y)
    rate = table.ito_deriv(y)
    integrated = direct[0] + cumulative_trapezoid(rate, dx=path.grid.h, initial=0.0)
    return float(np.max(np.abs(direct - integrated)))


@dataclass(frozen=True)
class BridgeCovarianceCell:
    t: float
    u: float
    estimate: float
    expected: float
    sigma: float
    passed: bool


@dataclass(frozen=True)
class BridgeCovarianceReport:
    n: int
    seeds: int
    base_seed: int
    cells: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    @property
    def max_sigma_ratio(self) -> float:
        ratios = [abs(c.estimate - c.expected) / c.sigma for c in self.cells if c.sigma > 0]
        return max(ratios) if ratios else 0.0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "seeds": self.seeds,
            "base_seed": self.base_seed,
            "passed": self.passed,
            "max_sigma_ratio": self.max_sigma_ratio,
            "cells": [vars(c) for c in self.cells],
        }


def brownian_bridge_check(
    n: int,
    seeds: int,
    base_seed: int = 90210,
    lattice: tuple = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> BridgeCovarianceReport:
    """Monte Carlo check that ``Z_t = int_0^1 K(t,s) dW_s`` is the bridge.

    ``K(t,s) = (1-t) 1{s < t} - t 1{s >= t}`` (the strict inequality at the
    left endpoints makes the discrete sum equal ``W(t) - t W(1)`` exactly,
    so ``Z(0) = Z(1) = 0``).  The sample covariance over ``seeds`` paths is
    compared against ``min(t,u) - t*u`` cell by cell at three standard
    errors; cells with zero variance must match exactly.
    """
    if seeds < 100:
        raise ValueError(f"need at least 100 seeds for the covariance check, got {seeds}")
    grid = Grid(n)
    lat = np.asarray(lattice, dtype=float)
    tj = grid.points[:n]
    rows = np.where(tj[None, :] < lat[:, None], 1.0 - lat[:, None], -lat[:, None])

    z = np.empty((seeds, len(lat)))
    for m in range(seeds):
        path = sample_path(n, base_seed, stream=m)
        z[m] = rows @ path.increments

    cells = []
    for i, t in enumerate(lat):
        for j, u in enumerate(lat):
            prods = z[:, i] * z[:, j]
            est = float(np.mean(prods))
            expected = float(min(t, u) - t * u)
            sigma = float(np.std(prods, ddof=1) / np.sqrt(seeds))
            ok = abs(est - expected) <= 3.0 * sigma if sigma > 0 else est == expected
            cells.append(BridgeCovarianceCell(float(t), float(u), est, expected, sigma, ok))
    return BridgeCovarianceReport(n=n, seeds=seeds, base_seed=base_seed, cells=tuple(cells))
