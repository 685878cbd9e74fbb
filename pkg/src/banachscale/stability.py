"""Stability of the fixed-point construction under data perturbation.

A convergent family of problem instances (x_n, U_n, B_n) with a uniform
constants certificate is solved next to its limit instance, and the sup-norm
deviations s_n = max_{t <= t'} ||u_n(t) - u(t)||_alpha are reported together
with the solver floor below which they are indistinguishable from the limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .scalecore import OvcyannikovConstants, ScaleWindow, lambda0
from .solver import (
    ConvergenceReport,
    EvolutionSystem,
    PerturbationMap,
    ScaleNorm,
    TriangleSolution,
    picard_solve,
)


@dataclass
class ProblemInstance:
    """One (x, U, B) triple with its constants certificate and scale norm."""

    x: np.ndarray
    evolution: EvolutionSystem
    perturbation: PerturbationMap
    consts: OvcyannikovConstants
    norm: ScaleNorm
    label: str = ""


@dataclass
class PerturbedFamily:
    """Limit instance plus members, sharing one window and one beta."""

    limit: ProblemInstance
    members: list[ProblemInstance]
    window: ScaleWindow

    def __post_init__(self):
        beta = self.limit.consts.beta
        for inst in self.members:
            if inst.consts.beta != beta:
                raise DomainError(
                    f"family member {inst.label!r} declares beta = {inst.consts.beta}, "
                    f"limit has beta = {beta}"
                )

    def uniform_constants(self) -> OvcyannikovConstants:
        """Componentwise maxima over the limit and every member."""
        insts = [self.limit, *self.members]
        return OvcyannikovConstants(
            c1=max(i.consts.c1 for i in insts),
            beta=self.limit.consts.beta,
            c2=max(i.consts.c2 for i in insts),
            c3=max(i.consts.c3 for i in insts),
            cx=max(i.consts.cx for i in insts),
            x_norm=max(i.consts.x_norm for i in insts),
        )


def lambda1(family: PerturbedFamily, r_prime: float | None = None) -> float:
    """max{lambda0(limit), sup_n lambda0(member_n)} over the shared window."""
    if not family.members:
        raise DomainError("family has no members")
    values = [
        lambda0(family.window, inst.consts, r_prime)
        for inst in (family.limit, *family.members)
    ]
    return max(values)


@dataclass
class StabilityReport:
    """Deviations s_n, perturbation sizes and the achievable floor."""

    s_values: list[float]
    perturbation_sizes: list[float]
    floor: float
    alpha: float
    t_prime: float
    labels: list[str] = field(default_factory=list)
    limit_report: ConvergenceReport | None = None
    member_reports: list[ConvergenceReport] = field(default_factory=list)

    def loglog_slope(self) -> float:
        """Least-squares slope of log s_n vs log perturbation size.

        Points at or below the floor are excluded; they carry no signal.
        """
        pts = [
            (math.log(p), math.log(s))
            for p, s in zip(self.perturbation_sizes, self.s_values)
            if s > self.floor and p > 0.0
        ]
        if len(pts) < 2:
            raise DomainError("fewer than 2 deviation points above the solver floor")
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        return float(np.polyfit(xs, ys, 1)[0])


def _sup_deviation(
    u: TriangleSolution, v: TriangleSolution, alpha: float, t_prime: float
) -> float:
    best = 0.0
    for j, t in enumerate(u.t_grid):
        if t > t_prime:
            break
        best = max(best, u.norm(u.values[j] - v.values[j], alpha))
    return best


def stability_experiment(
    family: PerturbedFamily,
    alpha: float,
    t_prime: float,
    tol: float = 1e-10,
    **solver_kwargs,
) -> StabilityReport:
    """Solve the limit and every member, report s_n at the diagnostic scale.

    Requires lam > lambda1 so every solve contracts under the shared slope.
    The floor is twice the worst certified tail bound across all solves: two
    trajectories agreeing to solver accuracy cannot be told apart below it.
    """
    lam = family.window.require_lam()
    lam1 = lambda1(family)
    if lam <= lam1:
        raise ConfigurationError(
            f"horizon slope lam = {lam} must exceed lambda1 = {lam1}"
        )
    if not (family.window.alpha0 < alpha <= family.window.alpha_top):
        raise DomainError(
            f"diagnostic alpha = {alpha} outside ({family.window.alpha0}, "
            f"{family.window.alpha_top}]"
        )
    if not (0.0 < t_prime < (alpha - family.window.alpha0) / lam):
        raise DomainError(
            f"t_prime = {t_prime} outside (0, {(alpha - family.window.alpha0) / lam})"
        )

    u_lim, rep_lim = picard_solve(
        family.limit.x,
        family.limit.evolution,
        family.limit.perturbation,
        family.window,
        family.limit.consts,
        family.limit.norm,
        tol=tol,
        **solver_kwargs,
    )
    s_values, sizes, labels, reports = [], [], [], []
    tails = [rep_lim.tail_bound]
    for inst in family.members:
        u_n, rep_n = picard_solve(
            inst.x,
            inst.evolution,
            inst.perturbation,
            family.window,
            inst.consts,
            inst.norm,
            tol=tol,
            **solver_kwargs,
        )
        s_values.append(_sup_deviation(u_n, u_lim, alpha, t_prime))
        sizes.append(
            float(family.limit.norm(inst.x - family.limit.x, family.window.alpha_star))
        )
        labels.append(inst.label)
        reports.append(rep_n)
        tails.append(rep_n.tail_bound)
    floor = 2.0 * max(max(tails), tol)
    return StabilityReport(
        s_values, sizes, floor, alpha, t_prime, labels, rep_lim, reports
    )


def propagator_convergence(
    family: PerturbedFamily, samples: int = 20, seed: int = 0
) -> list[float]:
    """Sampled surrogate for uniform convergence of the propagators U_n -> U.

    Compact-uniform convergence reduces to finite samples in the truncated
    state space: random unit-scaled vectors and (t, s) pairs are propagated by
    each member and by the limit, and the worst alpha_top-norm gap per member
    is returned.
    """
    rng = np.random.default_rng(seed)
    win = family.window
    dim = len(family.limit.x)
    vecs = rng.uniform(-1.0, 1.0, (samples, dim))
    st = np.sort(rng.uniform(0.0, win.T, (samples, 2)), axis=1)
    gaps = []
    for inst in family.members:
        worst = 0.0
        for v, (s, t) in zip(vecs, st):
            gap = family.limit.norm(
                inst.evolution.apply(t, s, v) - family.limit.evolution.apply(t, s, v),
                win.alpha_top,
            )
            worst = max(worst, gap)
        gaps.append(worst)
    return gaps


# ---------------------------------------------------------------------------
# family builders


def kimura_h_family(model, k0, n_values: list[int]) -> PerturbedFamily:
    """Family with selection cost h_n = h * (1 + 2^(-n)), psi and a fixed.

    The limit is the unperturbed model.  Every instance gets its own extracted
    constants certificate; the shared window must already carry a horizon
    slope above lambda1 (resolve it with :func:`lambda1` first if needed).
    """
    from .kimura import KimuraProblem

    def as_instance(mdl, label):
        prob = KimuraProblem.build(mdl, k0)
        return ProblemInstance(
            k0.to_vector(), prob.evolution, prob.perturbation, prob.consts,
            prob.norm, label,
        )

    limit = as_instance(model, "limit")
    members = []
    for n in n_values:
        rates_n = replace(model.rates, h_base=model.rates.h_base * (1.0 + 2.0 ** (-n)))
        model_n = replace(model, rates=rates_n, _matrix_cache={})
        members.append(as_instance(model_n, f"h*(1+2^-{n})"))
    return PerturbedFamily(limit, members, model.window)


def kimura_datum_family(model, k0, epsilons: list[float]) -> PerturbedFamily:
    """Family perturbing only the initial hierarchy above level 0.

    Member n starts from k0 with every level >= 1 scaled by (1 + eps_n); the
    operators and certificates are shared with the limit except for the
    datum-dependent entries (c3, cx, x_norm), which are re-extracted.
    """
    from .kimura import CorrelationHierarchy, KimuraProblem

    def as_instance(hier, label):
        prob = KimuraProblem.build(model, hier)
        return ProblemInstance(
            hier.to_vector(), prob.evolution, prob.perturbation, prob.consts,
            prob.norm, label,
        )

    limit = as_instance(k0, "limit")
    members = []
    for eps in epsilons:
        levels = [k0.levels[0].copy()] + [
            lv * (1.0 + eps) for lv in k0.levels[1:]
        ]
        hier = CorrelationHierarchy(k0.m, k0.n_max, levels)
        members.append(as_instance(hier, f"x*(1+{eps:g})"))
    return PerturbedFamily(limit, members, model.window)


# ---------------------------------------------------------------------------
# scalar closed-form test problem


class ScalarEvolution(EvolutionSystem):
    """U(t,s) = exp(-mu (t-s)) on a one-dimensional state, norm flat in alpha."""

    def __init__(self, mu: float):
        self.mu = mu
        self.c1 = 1.0 if mu >= 0 else math.inf
        self.beta = 0.0

    def apply(self, t: float, s: float, v: np.ndarray) -> np.ndarray:
        return math.exp(-self.mu * (t - s)) * v

    def generator_apply(self, t: float, v: np.ndarray) -> np.ndarray:
        return -self.mu * v


class ScalarPerturbation(PerturbationMap):
    """B(u, t) = c u; certificates are sized to the declared window."""

    def __init__(self, c: float, window: ScaleWindow, x0: float):
        self.c = c
        span = window.alpha_top - window.alpha_star
        self.c2 = abs(c) * span
        self.c3 = abs(c) * abs(x0) * span
        self.r = window.r

    def apply(self, v: np.ndarray, t: float) -> np.ndarray:
        return self.c * v


def scalar_problem(
    mu: float, c: float, x0: float, window: ScaleWindow
) -> ProblemInstance:
    """Instance for u' = -mu u + c u, exact solution x0 exp((c - mu) t)."""
    ev = ScalarEvolution(mu)
    pert = ScalarPerturbation(c, window, x0)
    consts = OvcyannikovConstants(
        c1=ev.c1,
        beta=0.0,
        c2=pert.c2,
        c3=pert.c3,
        cx=abs(mu) * abs(x0),
        x_norm=abs(x0),
    )
    norm = lambda v, alpha: float(np.max(np.abs(v)))  # noqa: E731
    return ProblemInstance(np.array([x0]), ev, pert, consts, norm, f"x0={x0:g}")


def scalar_family(
    mu: float, c: float, x0: float, epsilons: list[float], window: ScaleWindow
) -> PerturbedFamily:
    """Initial-datum family x_n = x0 (1 + eps_n) for the scalar problem."""
    limit = scalar_problem(mu, c, x0, window)
    members = [scalar_problem(mu, c, x0 * (1.0 + eps), window) for eps in epsilons]
    return PerturbedFamily(limit, members, window)


def scalar_exact(mu: float, c: float, x0: float, t: float) -> float:
    """Closed-form solution of the scalar test problem."""
    return x0 * math.exp((c - mu) * t)
