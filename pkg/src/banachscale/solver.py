"""Generic fixed-point engine for u' = A(t)u + B(u,t) in a Banach scale.

The mild formulation u(t) = U(t,0)x + int_0^t U(t,s)B(u(s),s) ds is solved by
Picard iteration on a uniform time grid restricted to the admissible triangle
t < (alpha - alpha0)/lam.  Monitors certify the contraction ratio, the
a-priori bound and the classical-solution residual.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    AdmissibilityError,
    ConfigurationError,
    ContractionViolationError,
    DomainError,
)
from .scalecore import OvcyannikovConstants, ScaleWindow, lambda0, weighted_gamma_norm

#: norm callable signature: (vector, alpha) -> float
ScaleNorm = Callable[[np.ndarray, float], float]


class EvolutionSystem(abc.ABC):
    """Two-parameter propagator U(t,s) of the linear part A(t).

    Must satisfy U(t,t) = id, the cocycle law U(t,r)U(r,s) = U(t,s) up to
    integrator tolerance, and ||U(t,s)v||_alpha <= c1/(alpha-alpha')^beta
    * ||v||_{alpha'}.
    """

    c1: float
    beta: float

    @abc.abstractmethod
    def apply(self, t: float, s: float, v: np.ndarray) -> np.ndarray:
        """Propagate v from time s to time t."""

    @abc.abstractmethod
    def generator_apply(self, t: float, v: np.ndarray) -> np.ndarray:
        """Apply A(t) to v (used by the residual monitor)."""


class PerturbationMap(abc.ABC):
    """Nonlinear part B(u,t) with declared Ovcyannikov constants c2, c3, r."""

    c2: float
    c3: float
    r: float

    @abc.abstractmethod
    def apply(self, v: np.ndarray, t: float) -> np.ndarray:
        """Evaluate B(v, t)."""


@dataclass
class TriangleSolution:
    """Values of u on the (t, alpha) triangle grid.

    ``values[j]`` is the scale-vector at ``t_grid[j]``; ``mask[j, i]`` marks
    whether t_j lies strictly below the alpha_grid[i]-horizon.  ``norm`` is the
    scale norm (vector, alpha) -> float shared by all diagnostics.
    """

    t_grid: np.ndarray
    values: np.ndarray
    alpha_grid: np.ndarray
    mask: np.ndarray
    norm: ScaleNorm

    def norm_at(self, j: int, alpha: float) -> float:
        return self.norm(self.values[j], alpha)

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0]) if len(self.t_grid) > 1 else 0.0

    def with_values(self, values: np.ndarray) -> "TriangleSolution":
        return TriangleSolution(self.t_grid, values, self.alpha_grid, self.mask, self.norm)

    def lipschitz_estimate(self, alpha: float) -> float:
        """Finite L with ||u(t_{j+1}) - u(t_j)||_alpha <= L dt (continuity surrogate)."""
        if len(self.t_grid) < 2:
            return 0.0
        diffs = [
            self.norm(self.values[j + 1] - self.values[j], alpha)
            for j in range(len(self.t_grid) - 1)
        ]
        return max(diffs) / self.dt


@dataclass
class ContractionReport:
    defined: bool
    measured: float | None
    bound: float
    slack: float
    violated: bool


@dataclass
class AprioriReport:
    worst_margin: float
    rhs: float
    worst_lhs: float
    samples: int


@dataclass
class ConvergenceReport:
    """Per-iterate diagnostics of a Picard run."""

    increments: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    rho: float = 0.0
    m_values: list[float] = field(default_factory=list)
    apriori_margin: float = 0.0
    iterations: int = 0
    tail_bound: float = 0.0
    quadrature_error_estimate: float = 0.0
    converged: bool = False


def make_grid(
    window: ScaleWindow,
    norm: ScaleNorm,
    dim: int,
    n_steps: int,
    n_alpha: int = 8,
    theta: float = 0.9,
) -> TriangleSolution:
    """Empty triangle grid on [0, theta*(alpha_top-alpha0)/lam].

    theta < 1 keeps the degenerate weight at the horizon out of the grid.
    """
    lam = window.require_lam()
    t_end = theta * (window.alpha_top - window.alpha0) / lam
    t_grid = np.linspace(0.0, t_end, n_steps + 1)
    alpha_grid = np.linspace(window.alpha0, window.alpha_top, n_alpha + 1)
    mask = t_grid[:, None] < (alpha_grid[None, :] - window.alpha0) / lam
    values = np.zeros((n_steps + 1, dim))
    return TriangleSolution(t_grid, values, alpha_grid, mask, norm)


def _radius_check(u: TriangleSolution, x: np.ndarray, r: float) -> None:
    if np.isinf(r):
        return
    for i, alpha in enumerate(u.alpha_grid):
        for j in range(len(u.t_grid)):
            if not u.mask[j, i]:
                continue
            dev = u.norm(u.values[j] - x, alpha)
            if dev > r * (1.0 + 1e-12):
                raise AdmissibilityError(
                    f"||u - x||_alpha = {dev} > r = {r} at node "
                    f"(t = {u.t_grid[j]}, alpha = {alpha})"
                )


def integral_map(
    u: TriangleSolution,
    U: EvolutionSystem,
    B: PerturbationMap,
    window: ScaleWindow,
    x: np.ndarray,
) -> TriangleSolution:
    """T(u)(t) = int_0^t U(t,s) B(u(s),s) ds by composite Simpson.

    u is linearly interpolated at quadrature midpoints.  The running integral
    is advanced one step at a time via the cocycle law, which reproduces the
    direct node-by-node Simpson evaluation up to integrator tolerance.
    """
    _radius_check(u, x, B.r)
    t = u.t_grid
    n = len(t) - 1
    out = np.zeros_like(u.values)
    if n < 0:
        raise DomainError("empty time grid")
    g_nodes = np.array([B.apply(u.values[j], t[j]) for j in range(n + 1)])
    acc = np.zeros_like(u.values[0])
    for j in range(n):
        dt = t[j + 1] - t[j]
        t_mid = t[j] + 0.5 * dt
        g_mid = B.apply(0.5 * (u.values[j] + u.values[j + 1]), t_mid)
        acc = U.apply(t[j + 1], t[j], acc) + (dt / 6.0) * (
            U.apply(t[j + 1], t[j], g_nodes[j])
            + 4.0 * U.apply(t[j + 1], t_mid, g_mid)
            + g_nodes[j + 1]
        )
        out[j + 1] = acc
    return u.with_values(out)


def _weighted_diff_norm(
    u: TriangleSolution, v: TriangleSolution, window: ScaleWindow
) -> float:
    return weighted_gamma_norm(u.with_values(u.values - v.values), window)


def monitor_m(
    u: TriangleSolution,
    B: PerturbationMap,
    window: ScaleWindow,
    n_tau: int = 3,
) -> float:
    """M(u): weighted sup of ||B(u(t), tau)||_alpha over the triangle and tau."""
    lam = window.require_lam()
    taus = np.linspace(0.0, (window.alpha_top - window.alpha0) / lam, n_tau)
    best = 0.0
    for tau in taus:
        b_vals = [B.apply(u.values[j], tau) for j in range(len(u.t_grid))]
        for i, alpha in enumerate(u.alpha_grid):
            for j, t in enumerate(u.t_grid):
                if not u.mask[j, i]:
                    continue
                w = (alpha - window.alpha0 - lam * t) ** window.gamma
                best = max(best, w * u.norm(b_vals[j], alpha))
    return best


def apriori_bound_rhs(window: ScaleWindow, consts: OvcyannikovConstants) -> float:
    """Right-hand side of the a-priori estimate on M(u)."""
    return (
        (consts.c3 / (window.alpha0 - window.alpha_star) + consts.cx)
        * (window.alpha_top - window.alpha0) ** window.gamma
        * (1.0 + consts.x_norm)
    )


def _quadrature_estimate(u: TriangleSolution, B: PerturbationMap) -> float:
    """Budget for the Simpson + linear-midpoint-interpolation error.

    Dominated by the interpolation of u at midpoints: dt^2/8 * max ||g''||
    accumulated over the horizon, with g'' estimated by second differences of
    the integrand along the trajectory.
    """
    t = u.t_grid
    if len(t) < 3:
        return 0.0
    g = np.array([B.apply(u.values[j], t[j]) for j in range(len(t))])
    dt = u.dt
    alpha_top = float(u.alpha_grid[-1])
    d2 = g[2:] - 2.0 * g[1:-1] + g[:-2]
    worst = max(u.norm(row, alpha_top) for row in d2) / dt**2
    return float(t[-1] * dt**2 / 8.0 * worst)


def picard_solve(
    x: np.ndarray,
    U: EvolutionSystem,
    B: PerturbationMap,
    window: ScaleWindow,
    consts: OvcyannikovConstants,
    norm: ScaleNorm,
    tol: float = 1e-10,
    k_max: int = 60,
    n_steps: int = 100,
    n_alpha: int = 8,
    theta: float = 0.9,
    u_init: np.ndarray | None = None,
    ratio_slack: float = 1e-9,
) -> tuple[TriangleSolution, ConvergenceReport]:
    """Iterate u_{k+1} = U(.,0)x + T(u_k) until the increment drops below tol.

    Requires lam > lambda0; measured increment ratios above lambda0/lam plus
    slack abort with :class:`ContractionViolationError`.  ``u_init`` overrides
    the default starting iterate U(.,0)x (used by the uniqueness surrogate).
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    lam = window.require_lam()
    lam0 = lambda0(window, consts)
    if lam <= lam0:
        raise ConfigurationError(
            f"horizon slope lam = {lam} must exceed lambda0 = {lam0}"
        )
    rho = lam0 / lam

    grid = make_grid(window, norm, len(x), n_steps, n_alpha, theta)
    t = grid.t_grid

    # propagate the free trajectory U(t,0)x once, stepwise via the cocycle
    u0_vals = np.zeros_like(grid.values)
    u0_vals[0] = x
    for j in range(len(t) - 1):
        u0_vals[j + 1] = U.apply(t[j + 1], t[j], u0_vals[j])
    u_free = grid.with_values(u0_vals)

    u = u_free if u_init is None else grid.with_values(
        np.broadcast_to(u_init, grid.values.shape).copy()
    )

    report = ConvergenceReport(rho=rho)
    prev_d = None
    quad_budget = 0.0
    for k in range(k_max):
        tu = integral_map(u, U, B, window, x)
        u_next = grid.with_values(u_free.values + tu.values)
        d = _weighted_diff_norm(u_next, u, window)
        report.increments.append(d)
        report.m_values.append(monitor_m(u_next, B, window))
        quad_budget = _quadrature_estimate(u_next, B)
        if prev_d is not None and prev_d > 0:
            ratio = d / prev_d
            report.ratios.append(ratio)
            if d > tol and ratio > rho + ratio_slack + quad_budget:
                raise ContractionViolationError(
                    f"measured ratio {ratio} exceeds lambda0/lam = {rho} "
                    f"plus slack {ratio_slack + quad_budget}"
                )
        u = u_next
        prev_d = d
        report.iterations = k + 1
        if d <= tol:
            report.converged = True
            break

    last_d = report.increments[-1] if report.increments else 0.0
    report.tail_bound = last_d * rho / (1.0 - rho)
    report.quadrature_error_estimate = quad_budget
    report.apriori_margin = apriori_bound_rhs(window, consts) - max(
        report.m_values, default=0.0
    )
    return u, report


def contraction_check(
    u: TriangleSolution,
    v: TriangleSolution,
    U: EvolutionSystem,
    B: PerturbationMap,
    window: ScaleWindow,
    x: np.ndarray,
    consts: OvcyannikovConstants,
    slack: float = 1e-9,
) -> ContractionReport:
    """Measure ||T(u)-T(v)||^(gamma) / ||u-v||^(gamma) against lambda0/lam."""
    lam = window.require_lam()
    bound = lambda0(window, consts) / lam
    denom = _weighted_diff_norm(u, v, window)
    if denom == 0.0:
        return ContractionReport(False, None, bound, slack, False)
    tu = integral_map(u, U, B, window, x)
    tv = integral_map(v, U, B, window, x)
    measured = _weighted_diff_norm(tu, tv, window) / denom
    quad = max(_quadrature_estimate(u, B), _quadrature_estimate(v, B))
    tol = slack + quad
    return ContractionReport(True, measured, bound, tol, measured > bound + tol)


def apriori_check(
    u: TriangleSolution,
    B: PerturbationMap,
    window: ScaleWindow,
    consts: OvcyannikovConstants,
    n_tau: int = 5,
) -> AprioriReport:
    """Margins of the a-priori bound over sampled (t, tau, alpha) triples."""
    lam = window.require_lam()
    rhs = apriori_bound_rhs(window, consts)
    taus = np.linspace(0.0, (window.alpha_top - window.alpha0) / lam, n_tau)
    worst_lhs = 0.0
    count = 0
    for tau in taus:
        b_vals = [B.apply(u.values[j], tau) for j in range(len(u.t_grid))]
        for i, alpha in enumerate(u.alpha_grid):
            for j, t in enumerate(u.t_grid):
                if not u.mask[j, i]:
                    continue
                w = (alpha - window.alpha0 - lam * t) ** window.gamma
                worst_lhs = max(worst_lhs, w * u.norm(b_vals[j], alpha))
                count += 1
    return AprioriReport(rhs - worst_lhs, rhs, worst_lhs, count)


def residual_check(
    u: TriangleSolution,
    U: EvolutionSystem,
    B: PerturbationMap,
    window: ScaleWindow,
) -> float:
    """Max interior defect of u' = A(t)u + B(u,t) at alpha_top, central differences."""
    t = u.t_grid
    if len(t) < 3:
        raise DomainError("residual check needs at least 3 time nodes")
    dt = u.dt
    alpha_top = window.alpha_top
    worst = 0.0
    for j in range(1, len(t) - 1):
        dudt = (u.values[j + 1] - u.values[j - 1]) / (2.0 * dt)
        defect = dudt - U.generator_apply(t[j], u.values[j]) - B.apply(u.values[j], t[j])
        worst = max(worst, u.norm(defect, alpha_top))
    return worst
