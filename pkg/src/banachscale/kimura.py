"""Mutation-selection hierarchy on a discrete site space.

The state is a truncated family of symmetric correlation-type level functions
k^(0), ..., k^(N_max) indexed by subsets of sites.  The generator splits as
L = -A0 + A1 + Bdelta*k, where -A0 drives the evolution system and
B(k, t) = A1 k + Bdelta(k) k is the nonlinear perturbation fed to the generic
fixed-point solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, ModelValidationError
from .scalecore import OvcyannikovConstants, ScaleWindow, lambda0
from .solver import (
    ConvergenceReport,
    EvolutionSystem,
    PerturbationMap,
    TriangleSolution,
    picard_solve,
)


@lru_cache(maxsize=None)
def level_configs(m: int, n: int) -> tuple[tuple[int, ...], ...]:
    """Canonical (sorted) configurations of n distinct sites out of m."""
    return tuple(combinations(range(m), n))


@lru_cache(maxsize=None)
def config_index(m: int, n: int) -> dict[tuple[int, ...], int]:
    return {eta: i for i, eta in enumerate(level_configs(m, n))}


@dataclass(frozen=True)
class DiscreteSpace:
    """Finite site set with strictly positive quadrature weights."""

    points: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if len(self.points) < 1 or len(self.points) != len(w):
            raise ModelValidationError("points and weights must be nonempty and aligned")
        if not np.all(np.isfinite(w)) or not np.all(w > 0):
            raise ModelValidationError("weights must be finite and strictly positive")

    @classmethod
    def uniform(cls, m: int, total: float = 1.0) -> "DiscreteSpace":
        return cls(tuple(f"x{i}" for i in range(m)), np.full(m, total / m))

    @property
    def m(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class TimeProfile:
    """Built-in time dependence of a rate: constant, exp decay or sinusoidal."""

    kind: str = "constant"
    rate: float = 0.0
    amp: float = 0.0
    freq: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "exp_decay", "sinusoidal"):
            raise ModelValidationError(f"unknown time profile {self.kind!r}")
        if self.kind == "exp_decay" and self.rate < 0:
            raise ModelValidationError("exp_decay rate must be nonnegative")
        if self.kind == "sinusoidal" and not (0.0 <= self.amp <= 1.0):
            raise ModelValidationError("sinusoidal amplitude must lie in [0, 1]")

    def value(self, t: float) -> float:
        if self.kind == "constant":
            return 1.0
        if self.kind == "exp_decay":
            return math.exp(-self.rate * t)
        return 1.0 + self.amp * math.sin(self.freq * t)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "sinusoidal" and self.amp == 0.0)

    def integral(self, t: float) -> float:
        """Exact antiderivative value int_0^t profile(s) ds."""
        if self.kind == "constant":
            return t
        if self.kind == "exp_decay":
            if self.rate == 0.0:
                return t
            return (1.0 - math.exp(-self.rate * t)) / self.rate
        return t + self.amp * (1.0 - math.cos(self.freq * t)) / self.freq


@dataclass(frozen=True)
class RateData:
    """Site rates h (selection cost), psi (pair interaction) and a (appearance).

    Each rate is a nonnegative base array scaled by a built-in time profile;
    psi must be symmetric with an ignored diagonal (the quadrature sums skip
    coincident sites).
    """

    h_base: np.ndarray
    psi_base: np.ndarray
    a_base: np.ndarray
    h_profile: TimeProfile = TimeProfile()
    psi_profile: TimeProfile = TimeProfile()
    a_profile: TimeProfile = TimeProfile()

    def __post_init__(self):
        h = np.asarray(self.h_base, dtype=float)
        psi = np.asarray(self.psi_base, dtype=float)
        a = np.asarray(self.a_base, dtype=float)
        object.__setattr__(self, "h_base", h)
        object.__setattr__(self, "psi_base", psi)
        object.__setattr__(self, "a_base", a)
        m = len(h)
        if psi.shape != (m, m) or len(a) != m:
            raise ModelValidationError("rate arrays must share the site dimension")
        for arr, name in ((h, "h"), (psi, "psi"), (a, "a")):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ModelValidationError(f"rate {name} must be finite and nonnegative")
        if not np.array_equal(psi, psi.T):
            raise ModelValidationError("psi must be symmetric in its site arguments")

    @classmethod
    def constant(cls, m: int, h: float, psi: float, a: float) -> "RateData":
        return cls(np.full(m, h), np.full((m, m), psi), np.full(m, a))

    def h(self, t: float) -> np.ndarray:
        return self.h_base * self.h_profile.value(t)

    def psi(self, t: float) -> np.ndarray:
        return self.psi_base * self.psi_profile.value(t)

    def a(self, t: float) -> np.ndarray:
        return self.a_base * self.a_profile.value(t)

    @property
    def time_constant(self) -> bool:
        return (
            self.h_profile.is_constant
            and self.psi_profile.is_constant
            and self.a_profile.is_constant
        )


class CorrelationHierarchy:
    """Truncated hierarchy: one table per level n, indexed by sorted subsets."""

    def __init__(self, m: int, n_max: int, levels: list[np.ndarray]):
        if len(levels) != n_max + 1:
            raise DomainError("need one table per level 0..n_max")
        self.m = m
        self.n_max = n_max
        self.levels = [np.asarray(lv, dtype=float).copy() for lv in levels]
        for n, lv in enumerate(self.levels):
            if lv.shape != (math.comb(m, n),):
                raise DomainError(
                    f"level {n} must have binomial({m},{n}) = {math.comb(m, n)} entries"
                )

    @classmethod
    def zero(cls, m: int, n_max: int) -> "CorrelationHierarchy":
        return cls(m, n_max, [np.zeros(math.comb(m, n)) for n in range(n_max + 1)])

    @classmethod
    def poisson(cls, m: int, n_max: int, rho: np.ndarray) -> "CorrelationHierarchy":
        """Product hierarchy k(eta) = prod_{i in eta} rho_i, with k(empty) = 1."""
        rho = np.asarray(rho, dtype=float)
        levels = []
        for n in range(n_max + 1):
            levels.append(
                np.array([float(np.prod(rho[list(eta)])) for eta in level_configs(m, n)])
            )
        return cls(m, n_max, levels)

    def copy(self) -> "CorrelationHierarchy":
        return CorrelationHierarchy(self.m, self.n_max, self.levels)

    def value(self, eta: tuple[int, ...]) -> float:
        n = len(eta)
        if n > self.n_max:
            return 0.0
        return float(self.levels[n][config_index(self.m, n)[tuple(sorted(eta))]])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self.levels)

    @classmethod
    def from_vector(cls, m: int, n_max: int, vec: np.ndarray) -> "CorrelationHierarchy":
        levels, pos = [], 0
        for n in range(n_max + 1):
            size = math.comb(m, n)
            levels.append(np.asarray(vec[pos : pos + size]))
            pos += size
        return cls(m, n_max, levels)

    def norm(self, alpha: float) -> float:
        """max_n e^(-alpha n) max_eta |k^(n)(eta)|."""
        return max(
            math.exp(-alpha * n) * (np.max(np.abs(lv)) if lv.size else 0.0)
            for n, lv in enumerate(self.levels)
        )

    def __add__(self, other):
        return CorrelationHierarchy(
            self.m, self.n_max, [a + b for a, b in zip(self.levels, other.levels)]
        )

    def __sub__(self, other):
        return CorrelationHierarchy(
            self.m, self.n_max, [a - b for a, b in zip(self.levels, other.levels)]
        )

    def __rmul__(self, c: float):
        return CorrelationHierarchy(self.m, self.n_max, [c * lv for lv in self.levels])


@dataclass
class KimuraModel:
    """Discrete space, rates, truncation level and the working scale window."""

    space: DiscreteSpace
    rates: RateData
    n_max: int
    window: ScaleWindow
    _matrix_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n_max < 2:
            raise ModelValidationError("n_max must be at least 2 (pair term of Bdelta)")
        if len(self.rates.h_base) != self.space.m:
            raise ModelValidationError("rates and space disagree on the site count")

    @property
    def m(self) -> int:
        return self.space.m

    @property
    def dim(self) -> int:
        return sum(math.comb(self.m, n) for n in range(self.n_max + 1))

    def offsets(self) -> list[int]:
        out, pos = [], 0
        for n in range(self.n_max + 1):
            out.append(pos)
            pos += math.comb(self.m, n)
        return out

    def hierarchy_norm(self, vec: np.ndarray, alpha: float) -> float:
        """Scale norm on the flattened hierarchy vector."""
        off = self.offsets()
        best = 0.0
        for n in range(self.n_max + 1):
            size = math.comb(self.m, n)
            seg = vec[off[n] : off[n] + size]
            if seg.size:
                best = max(best, math.exp(-alpha * n) * float(np.max(np.abs(seg))))
        return best

    def a0_matrix(self, t: float) -> np.ndarray:
        key = ("a0", None if self.rates.time_constant else t)
        if key in self._matrix_cache:
            return self._matrix_cache[key]
        mat = _assemble_a0(self, t)
        self._matrix_cache[key] = mat
        return mat

    def a1_matrix(self, t: float) -> np.ndarray:
        key = ("a1", None if self.rates.time_constant else t)
        if key in self._matrix_cache:
            return self._matrix_cache[key]
        mat = _assemble_a1(self, t)
        self._matrix_cache[key] = mat
        return mat


def _check_config(model: KimuraModel, eta) -> tuple[int, ...]:
    eta = tuple(eta)
    if len(set(eta)) != len(eta):
        raise ModelValidationError(f"configuration {eta} repeats a site index")
    if any(i < 0 or i >= model.m for i in eta):
        raise ModelValidationError(f"configuration {eta} indexes outside the space")
    return tuple(sorted(eta))


def selection_cost(model: KimuraModel, t: float, eta) -> float:
    """Phi(t, eta) = sum_i h(t,i) + (1/2) sum_{i != j in eta} psi(t,i,j)."""
    eta = _check_config(model, eta)
    h = model.rates.h(t)
    psi = model.rates.psi(t)
    total = 0.0
    for i in eta:
        total += h[i]
    pair = 0.0
    for i in eta:
        for j in eta:
            if j != i:
                pair += psi[i, j]
    return total + 0.5 * pair


def _raising_sum(model: KimuraModel, t: float, k: CorrelationHierarchy, eta) -> float:
    """sum_{i not in eta} w_i h_i k(eta+i) + (1/2) sum_{i != j not in eta} w_i w_j psi_ij k(eta+i+j).

    Shared by the A0 action and Bdelta so that the level-0 cancellation of the
    full generator is exact in floating point.  Sums run in ascending index
    order; weights multiply after rate evaluation.
    """
    w = model.space.weights
    h = model.rates.h(t)
    psi = model.rates.psi(t)
    outside = [i for i in range(model.m) if i not in eta]
    total = 0.0
    for i in outside:
        total += w[i] * h[i] * k.value(eta + (i,))
    pair = 0.0
    for i in outside:
        for j in outside:
            if j != i:
                pair += w[i] * w[j] * psi[i, j] * k.value(eta + (i, j))
    return total + 0.5 * pair


def apply_A0(model: KimuraModel, t: float, k: CorrelationHierarchy) -> CorrelationHierarchy:
    """Multiplication by Phi plus the two raising (quadrature) terms."""
    out = CorrelationHierarchy.zero(model.m, model.n_max)
    for n in range(model.n_max + 1):
        for idx, eta in enumerate(level_configs(model.m, n)):
            out.levels[n][idx] = selection_cost(model, t, eta) * k.levels[n][
                idx
            ] + _raising_sum(model, t, k, eta)
    return out


def apply_A1(model: KimuraModel, t: float, k: CorrelationHierarchy) -> CorrelationHierarchy:
    """Lowering/exchange part: -psi raising over occupied sites plus a-lowering."""
    out = CorrelationHierarchy.zero(model.m, model.n_max)
    w = model.space.weights
    psi = model.rates.psi(t)
    a = model.rates.a(t)
    for n in range(model.n_max + 1):
        for idx, eta in enumerate(level_configs(model.m, n)):
            val = 0.0
            for i in eta:
                for j in range(model.m):
                    if j not in eta:
                        val -= w[j] * psi[i, j] * k.value(eta + (j,))
            for i in eta:
                val += a[i] * k.value(tuple(x for x in eta if x != i))
            out.levels[n][idx] = val
    return out


def bdelta(model: KimuraModel, t: float, k: CorrelationHierarchy) -> float:
    """Scalar multiplier: weighted level-1 h-sum plus weighted level-2 psi-sum."""
    if model.n_max < 2:
        raise ModelValidationError("bdelta needs n_max >= 2")
    return _raising_sum(model, t, k, ())


def apply_ldelta(model: KimuraModel, t: float, k: CorrelationHierarchy) -> CorrelationHierarchy:
    """Full generator -A0 k + A1 k + Bdelta(k) k; level 0 vanishes when k(empty)=1."""
    a0 = apply_A0(model, t, k)
    a1 = apply_A1(model, t, k)
    b = bdelta(model, t, k)
    out = CorrelationHierarchy.zero(model.m, model.n_max)
    for n in range(model.n_max + 1):
        out.levels[n] = -a0.levels[n] + a1.levels[n] + b * k.levels[n]
    return out


def _assemble_a0(model: KimuraModel, t: float) -> np.ndarray:
    d = model.dim
    off = model.offsets()
    mat = np.zeros((d, d))
    w = model.space.weights
    h = model.rates.h(t)
    psi = model.rates.psi(t)
    for n in range(model.n_max + 1):
        for idx, eta in enumerate(level_configs(model.m, n)):
            row = off[n] + idx
            mat[row, row] += selection_cost(model, t, eta)
            outside = [i for i in range(model.m) if i not in eta]
            if n + 1 <= model.n_max:
                ix1 = config_index(model.m, n + 1)
                for i in outside:
                    col = off[n + 1] + ix1[tuple(sorted(eta + (i,)))]
                    mat[row, col] += w[i] * h[i]
            if n + 2 <= model.n_max:
                ix2 = config_index(model.m, n + 2)
                for i in outside:
                    for j in outside:
                        if j != i:
                            col = off[n + 2] + ix2[tuple(sorted(eta + (i, j)))]
                            mat[row, col] += 0.5 * w[i] * w[j] * psi[i, j]
    return mat


def _assemble_a1(model: KimuraModel, t: float) -> np.ndarray:
    d = model.dim
    off = model.offsets()
    mat = np.zeros((d, d))
    w = model.space.weights
    psi = model.rates.psi(t)
    a = model.rates.a(t)
    for n in range(model.n_max + 1):
        for idx, eta in enumerate(level_configs(model.m, n)):
            row = off[n] + idx
            if n + 1 <= model.n_max:
                ix1 = config_index(model.m, n + 1)
                for i in eta:
                    for j in range(model.m):
                        if j not in eta:
                            col = off[n + 1] + ix1[tuple(sorted(eta + (j,)))]
                            mat[row, col] -= w[j] * psi[i, j]
            if n >= 1:
                ixm = config_index(model.m, n - 1)
                for i in eta:
                    col = off[n - 1] + ixm[tuple(x for x in eta if x != i)]
                    mat[row, col] += a[i]
    return mat


def bdelta_vec(model: KimuraModel, t: float, vec: np.ndarray) -> float:
    """Bdelta on the flattened representation (same accumulation order)."""
    k = CorrelationHierarchy.from_vector(model.m, model.n_max, vec)
    return bdelta(model, t, k)


def evolution_u(
    model: KimuraModel,
    t: float,
    s: float,
    k: np.ndarray | CorrelationHierarchy,
    per_unit_tol: float = 1e-10,
) -> np.ndarray | CorrelationHierarchy:
    """Propagate v' = -A0(tau) v from s to t with fixed-step RK4.

    The substep count doubles until a step-halving comparison is below
    ``per_unit_tol`` per unit time.  Returns the finer result; t = s is the
    exact identity.
    """
    if t < s:
        raise DomainError(f"evolution requires t >= s, got t = {t}, s = {s}")
    as_hierarchy = isinstance(k, CorrelationHierarchy)
    v0 = k.to_vector() if as_hierarchy else np.asarray(k, dtype=float)
    if t == s:
        out = v0.copy()
    else:
        n_sub = max(1, int(math.ceil((t - s) / 0.05)))
        # round-off floor: halving comparisons cannot resolve below a few ulps
        scale = max(1.0, float(np.max(np.abs(v0))))
        tol = per_unit_tol * (t - s) * scale + 64.0 * np.finfo(float).eps * scale
        coarse = _rk4_a0(model, s, t, v0, n_sub)
        while True:
            fine = _rk4_a0(model, s, t, v0, 2 * n_sub)
            if float(np.max(np.abs(fine - coarse))) <= tol:
                out = fine
                break
            coarse = fine
            n_sub *= 2
            if n_sub > 2**20:
                raise DomainError("evolution integrator failed to reach tolerance")
    if as_hierarchy:
        return CorrelationHierarchy.from_vector(model.m, model.n_max, out)
    return out


def _rk4_a0(model: KimuraModel, s: float, t: float, v0: np.ndarray, n: int) -> np.ndarray:
    h = (t - s) / n
    v = v0.copy()
    tau = s
    for _ in range(n):
        k1 = -model.a0_matrix(tau) @ v
        k2 = -model.a0_matrix(tau + 0.5 * h) @ (v + 0.5 * h * k1)
        k3 = -model.a0_matrix(tau + 0.5 * h) @ (v + 0.5 * h * k2)
        k4 = -model.a0_matrix(tau + h) @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tau += h
    return v


# ---------------------------------------------------------------------------
# rate aggregates and certified constants


@dataclass(frozen=True)
class RateAggregates:
    """sup-in-time scalars the certified constants are built from.

    Double psi sums run over distinct site pairs only; coincident sites are
    excluded throughout, matching the quadrature sums of the operators.
    """

    h_sup: float
    psi_sup: float
    a_sup: float
    int_h_sup: float
    int_psi_sup: float
    psi_row_int_sup: float
    t_samples: np.ndarray
    int_h_series: np.ndarray
    int_psi_series: np.ndarray


def rate_aggregates(model: KimuraModel, n_samples: int = 201) -> RateAggregates:
    w = model.space.weights
    ts = np.linspace(0.0, model.window.T, n_samples)
    offdiag = ~np.eye(model.m, dtype=bool)
    h_sup = psi_sup = a_sup = int_h_sup = int_psi_sup = row_sup = 0.0
    int_h_series = np.zeros(n_samples)
    int_psi_series = np.zeros(n_samples)
    for j, t in enumerate(ts):
        h, psi, a = model.rates.h(t), model.rates.psi(t), model.rates.a(t)
        h_sup = max(h_sup, float(np.max(h)))
        psi_sup = max(psi_sup, float(np.max(psi[offdiag])) if model.m > 1 else 0.0)
        a_sup = max(a_sup, float(np.max(a)))
        int_h_series[j] = float(w @ h)
        int_psi_series[j] = float(np.sum(np.outer(w, w) * psi * offdiag))
        row_sums = (psi * offdiag) @ w
        int_h_sup = max(int_h_sup, int_h_series[j])
        int_psi_sup = max(int_psi_sup, int_psi_series[j])
        row_sup = max(row_sup, float(np.max(row_sums)))
    if not all(
        np.isfinite(v) for v in (h_sup, psi_sup, a_sup, int_h_sup, int_psi_sup, row_sup)
    ):
        raise ModelValidationError("rate aggregates are not finite")
    return RateAggregates(
        h_sup, psi_sup, a_sup, int_h_sup, int_psi_sup, row_sup, ts, int_h_series, int_psi_series
    )


def kappa(model: KimuraModel, t: float, alpha: float) -> float:
    """Growth rate e^alpha * int h + (e^(2 alpha)/2) * int int psi at time t."""
    w = model.space.weights
    h, psi = model.rates.h(t), model.rates.psi(t)
    offdiag = ~np.eye(model.m, dtype=bool)
    return math.exp(alpha) * float(w @ h) + 0.5 * math.exp(2.0 * alpha) * float(
        np.sum(np.outer(w, w) * psi * offdiag)
    )


def kappa_integral(model: KimuraModel, s: float, t: float, alpha: float, n: int = 200) -> float:
    """Simpson integral of kappa over [s, t] at fixed alpha."""
    if t <= s:
        return 0.0
    ts = np.linspace(s, t, n + 1)
    vals = np.array([kappa(model, tau, alpha) for tau in ts])
    return float(simpson(vals, x=ts))


def a1_part_constant(model: KimuraModel, alpha: float, agg: RateAggregates) -> float:
    """Scale-Lipschitz constant of A1 with the 1/(alpha-alpha') factor stripped."""
    return (math.exp(alpha) * agg.psi_row_int_sup + math.exp(-alpha) * agg.a_sup) / math.e


def bdelta_constant(model: KimuraModel, alpha: float, agg: RateAggregates) -> float:
    """|Bdelta(t,k)| <= this * ||k||_alpha; also bounds the A0 raising terms."""
    return math.exp(alpha) * agg.int_h_sup + 0.5 * math.exp(2.0 * alpha) * agg.int_psi_sup


def model_constants(model: KimuraModel, k0: CorrelationHierarchy) -> OvcyannikovConstants:
    """Certified solver constants extracted from rate data.

    Window-wide suprema are taken so one certificate covers every
    (alpha', alpha) pair; the growth rate is evaluated at alpha_top, the worst
    scale index.
    """
    win = model.window
    if math.isinf(win.r):
        raise ModelValidationError(
            "the hierarchy perturbation is quadratic; a finite admissible radius r is required"
        )
    agg = rate_aggregates(model)
    kappa_series = np.array(
        [kappa(model, t, win.alpha_top) for t in agg.t_samples]
    )
    c1 = math.exp(float(simpson(kappa_series, x=agg.t_samples)))

    x_norm = k0.norm(win.alpha_star)
    ball = win.r + x_norm
    cb_top = bdelta_constant(model, win.alpha_top, agg)
    # termwise sup of the A1 constant over alpha' in the window
    a1_sup = (
        math.exp(win.alpha_top) * agg.psi_row_int_sup
        + math.exp(-win.alpha_star) * agg.a_sup
    ) / math.e
    c2 = a1_sup + cb_top * (win.alpha_top - win.alpha_star) * ball + cb_top * ball
    c3 = (
        a1_part_constant(model, win.alpha_star, agg) * x_norm
        + cb_top * (win.alpha_top - win.alpha_star) * x_norm**2
    )
    a0k0 = max(
        model.hierarchy_norm(model.a0_matrix(t) @ k0.to_vector(), win.alpha0)
        for t in np.linspace(0.0, win.T, 51)
    )
    cx = c1 * a0k0
    return OvcyannikovConstants(c1=c1, beta=0.0, c2=c2, c3=c3, cx=cx, x_norm=x_norm)


# ---------------------------------------------------------------------------
# solver adapters


class KimuraEvolution(EvolutionSystem):
    """Evolution system generated by -A0 on the flattened hierarchy."""

    def __init__(self, model: KimuraModel, c1: float, per_unit_tol: float = 1e-10):
        self.model = model
        self.c1 = c1
        self.beta = 0.0
        self.per_unit_tol = per_unit_tol

    def apply(self, t: float, s: float, v: np.ndarray) -> np.ndarray:
        return evolution_u(self.model, t, s, v, self.per_unit_tol)

    def generator_apply(self, t: float, v: np.ndarray) -> np.ndarray:
        return -(self.model.a0_matrix(t) @ v)


class KimuraPerturbation(PerturbationMap):
    """B(k, t) = A1(t) k + Bdelta(t, k) k on the flattened hierarchy."""

    def __init__(self, model: KimuraModel, c2: float, c3: float, r: float):
        self.model = model
        self.c2 = c2
        self.c3 = c3
        self.r = r

    def apply(self, v: np.ndarray, t: float) -> np.ndarray:
        return self.model.a1_matrix(t) @ v + bdelta_vec(self.model, t, v) * v


@dataclass
class KimuraProblem:
    """Model + initial hierarchy wired into the generic solver interfaces."""

    model: KimuraModel
    k0: CorrelationHierarchy
    consts: OvcyannikovConstants
    evolution: KimuraEvolution
    perturbation: KimuraPerturbation

    @classmethod
    def build(cls, model: KimuraModel, k0: CorrelationHierarchy) -> "KimuraProblem":
        consts = model_constants(model, k0)
        ev = KimuraEvolution(model, consts.c1)
        pert = KimuraPerturbation(model, consts.c2, consts.c3, model.window.r)
        return cls(model, k0, consts, ev, pert)

    @property
    def norm(self):
        return self.model.hierarchy_norm

    def resolved_window(self, lam_multiplier: float = 2.0) -> ScaleWindow:
        """Window with the horizon slope set (auto rule: lam = multiplier * lambda0)."""
        win = self.model.window
        if win.lam is not None:
            return win
        lam0 = lambda0(win.with_lam(1.0), self.consts)
        return win.with_lam(lam_multiplier * lam0)


def solve_kimura(
    model: KimuraModel,
    k0: CorrelationHierarchy,
    tol: float = 1e-10,
    **solver_kwargs,
) -> tuple[TriangleSolution, ConvergenceReport]:
    """Solve the hierarchy equation by Picard iteration on the mild form."""
    if k0.levels[0][0] != 1.0:
        raise DomainError("initial hierarchy must be normalized: k0(empty) = 1")
    problem = KimuraProblem.build(model, k0)
    window = problem.resolved_window()
    return picard_solve(
        k0.to_vector(),
        problem.evolution,
        problem.perturbation,
        window,
        problem.consts,
        problem.norm,
        tol=tol,
        **solver_kwargs,
    )
