import math

import numpy as np
import pytest

from banachscale.errors import (
    AdmissibilityError,
    ConfigurationError,
    ContractionViolationError,
    DomainError,
)
from banachscale.scalecore import (
    OvcyannikovConstants,
    ScaleWindow,
    lambda0,
    weighted_gamma_norm,
)
from banachscale.solver import (
    EvolutionSystem,
    PerturbationMap,
    contraction_check,
    integral_map,
    make_grid,
    picard_solve,
    residual_check,
)

FLAT_NORM = lambda v, alpha: float(np.max(np.abs(v)))  # noqa: E731


class IdentityEvolution(EvolutionSystem):
    c1 = 1.0
    beta = 0.0

    def apply(self, t, s, v):
        return np.asarray(v, dtype=float).copy()

    def generator_apply(self, t, v):
        return np.zeros_like(v)


class ExpEvolution(EvolutionSystem):
    """U(t,s) = exp(-mu (t-s)) componentwise."""

    beta = 0.0

    def __init__(self, mu):
        self.mu = mu
        self.c1 = 1.0

    def apply(self, t, s, v):
        return math.exp(-self.mu * (t - s)) * np.asarray(v, dtype=float)

    def generator_apply(self, t, v):
        return -self.mu * np.asarray(v, dtype=float)


class ConstantPerturbation(PerturbationMap):
    def __init__(self, c, window):
        self.c = np.asarray(c, dtype=float)
        self.c2 = 1.0
        self.c3 = float(np.max(np.abs(self.c))) * (window.alpha_top - window.alpha_star)
        self.r = window.r

    def apply(self, v, t):
        return self.c.copy()


class LinearPerturbation(PerturbationMap):
    def __init__(self, slope, window, declared_c2=None):
        self.slope = slope
        span = window.alpha_top - window.alpha_star
        self.c2 = declared_c2 if declared_c2 is not None else abs(slope) * span
        self.c3 = 1e-6
        self.r = window.r

    def apply(self, v, t):
        return self.slope * np.asarray(v, dtype=float)


def window(lam=None, r=math.inf):
    return ScaleWindow(0.0, 0.5, 1.0, lam=lam, r=r)


def consts(**kw):
    base = dict(c1=1.0, beta=0.0, c2=0.5, c3=0.5, cx=0.5, x_norm=1.0)
    base.update(kw)
    return OvcyannikovConstants(**base)


class TestIntegralMap:
    def test_zero_perturbation(self):
        win = window(lam=1.0)
        u = make_grid(win, FLAT_NORM, 2, 10)
        u.values[:] = 0.3
        B = LinearPerturbation(0.0, win)
        out = integral_map(u, IdentityEvolution(), B, win, np.zeros(2))
        assert np.all(out.values == 0.0)

    def test_starts_at_zero(self):
        win = window(lam=1.0)
        u = make_grid(win, FLAT_NORM, 2, 10)
        B = ConstantPerturbation([1.0, -2.0], win)
        out = integral_map(u, IdentityEvolution(), B, win, np.zeros(2))
        assert np.all(out.values[0] == 0.0)

    def test_constant_integrand_exact(self):
        # identity propagator, constant B: T(u)(t) = t*c
        win = window(lam=1.0)
        u = make_grid(win, FLAT_NORM, 2, 20)
        c = np.array([1.0, -2.0])
        out = integral_map(u, IdentityEvolution(), ConstantPerturbation(c, win), win, np.zeros(2))
        for j, t in enumerate(u.t_grid):
            assert out.values[j] == pytest.approx(t * c, abs=1e-10)

    def test_radius_violation_names_node(self):
        win = window(lam=1.0, r=0.1)
        u = make_grid(win, FLAT_NORM, 1, 5)
        u.values[:] = 5.0
        B = LinearPerturbation(0.0, win)
        with pytest.raises(AdmissibilityError, match="alpha"):
            integral_map(u, IdentityEvolution(), B, win, np.zeros(1))


class TestPicardSolve:
    def test_zero_perturbation_one_step(self):
        win = window(lam=40.0)
        x = np.array([2.0])
        u, rep = picard_solve(
            x, ExpEvolution(1.0), LinearPerturbation(0.0, win), win, consts(), FLAT_NORM,
            n_steps=20,
        )
        assert rep.increments[0] == 0.0
        assert rep.converged
        for j, t in enumerate(u.t_grid):
            assert u.values[j, 0] == pytest.approx(2.0 * math.exp(-t), rel=1e-9)

    def test_zero_data_zero_solution(self):
        win = window(lam=40.0)
        u, rep = picard_solve(
            np.zeros(1), ExpEvolution(1.0), LinearPerturbation(0.5, win), win,
            consts(x_norm=0.0), FLAT_NORM, n_steps=10,
        )
        assert np.all(u.values == 0.0)

    def test_infeasible_slope_rejected(self):
        win = window(lam=0.5)
        with pytest.raises(ConfigurationError, match="lambda0"):
            picard_solve(
                np.ones(1), ExpEvolution(1.0), LinearPerturbation(0.1, win), win,
                consts(), FLAT_NORM,
            )

    def test_bad_tol_rejected(self):
        win = window(lam=40.0)
        with pytest.raises(DomainError):
            picard_solve(
                np.ones(1), ExpEvolution(1.0), LinearPerturbation(0.1, win), win,
                consts(), FLAT_NORM, tol=0.0,
            )

    def test_inconsistent_certificate_detected(self):
        # B has Lipschitz slope 30 but the certificate declares c2 = 1e-3;
        # the dishonestly small lambda0 admits a slope whose measured ratio
        # must then exceed lambda0/lam.
        win = window(lam=2.1)
        fake = consts(c2=1e-3, c3=1e-3, cx=0.0, x_norm=1.0)
        assert lambda0(win, fake) < 2.1
        with pytest.raises(ContractionViolationError):
            picard_solve(
                np.ones(1), IdentityEvolution(),
                LinearPerturbation(30.0, win, declared_c2=1e-3), win,
                fake, FLAT_NORM, n_steps=40,
            )

    def test_exact_solution_linear_problem(self):
        # u' = -u + 0.5 u, closed form x e^{-t/2}
        win = window(lam=40.0)
        x = np.array([1.0])
        u, rep = picard_solve(
            x, ExpEvolution(1.0), LinearPerturbation(0.5, win), win, consts(), FLAT_NORM,
            n_steps=50,
        )
        for j, t in enumerate(u.t_grid):
            assert u.values[j, 0] == pytest.approx(math.exp(-0.5 * t), rel=1e-8)

    def test_uniqueness_surrogate(self):
        # second run starts from the constant-in-time iterate u^(0) = x
        win = window(lam=40.0)
        x = np.array([1.0])
        tol = 1e-12
        args = (x, ExpEvolution(1.0), LinearPerturbation(0.5, win), win, consts(), FLAT_NORM)
        u1, r1 = picard_solve(*args, tol=tol, n_steps=30)
        u2, r2 = picard_solve(*args, tol=tol, n_steps=30, u_init=x)
        d = weighted_gamma_norm(u1.with_values(u1.values - u2.values), win)
        assert d <= 2.0 * tol / (1.0 - r1.rho)

    def test_geometric_decrease(self):
        win = window(lam=40.0)
        u, rep = picard_solve(
            np.array([1.0]), ExpEvolution(1.0), LinearPerturbation(0.5, win), win,
            consts(), FLAT_NORM, n_steps=30,
        )
        for ratio in rep.ratios:
            if rep.increments[rep.ratios.index(ratio)] > 1e-10:
                assert ratio <= rep.rho + 1e-9 + rep.quadrature_error_estimate


class TestContractionCheck:
    def test_equal_iterates_undefined(self):
        win = window(lam=40.0)
        u = make_grid(win, FLAT_NORM, 1, 10)
        u.values[:] = 1.0
        rep = contraction_check(
            u, u.with_values(u.values.copy()), IdentityEvolution(),
            LinearPerturbation(0.5, win), win, np.ones(1), consts(),
        )
        assert not rep.defined
        assert rep.measured is None
        assert not rep.violated

    def test_linear_map_within_bound(self):
        win = window(lam=40.0)
        u = make_grid(win, FLAT_NORM, 1, 20)
        v = make_grid(win, FLAT_NORM, 1, 20)
        u.values[:] = 1.0
        v.values[:, 0] = 1.0 + 0.01 * np.sin(np.arange(21))
        rep = contraction_check(
            u, v, IdentityEvolution(), LinearPerturbation(0.5, win), win,
            np.ones(1), consts(),
        )
        assert rep.defined
        assert not rep.violated
        assert rep.measured <= rep.bound + rep.slack


class TestResidualCheck:
    def test_constant_solution_zero_residual(self):
        win = window(lam=1.0)
        u = make_grid(win, FLAT_NORM, 1, 10)
        u.values[:] = 2.0
        res = residual_check(u, IdentityEvolution(), LinearPerturbation(0.0, win), win)
        assert res <= 1e-14

    def test_exact_exponential_residual_is_taylor_remainder(self):
        # u = e^{-t}, A = -1, B = 0: residual <= dt^2 ||u|| / 6 + eps
        win = window(lam=1.0)
        u = make_grid(win, FLAT_NORM, 1, 40)
        u.values[:, 0] = np.exp(-u.t_grid)
        res = residual_check(u, ExpEvolution(1.0), LinearPerturbation(0.0, win), win)
        assert res <= u.dt**2 / 6.0 + 1e-12

    def test_too_few_nodes_rejected(self):
        win = window(lam=1.0)
        u = make_grid(win, FLAT_NORM, 1, 1)
        with pytest.raises(DomainError):
            residual_check(u, IdentityEvolution(), LinearPerturbation(0.0, win), win)
