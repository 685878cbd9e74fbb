"""Scale-window arithmetic, the horizon-slope threshold and the weighted norm.

A scale of Banach spaces is indexed by alpha in [alpha_star, alpha_top] with
norms decreasing in alpha.  Solutions live on the triangle
t < (alpha - alpha0) / lam, and all contraction arguments happen in the
weighted sup-norm  sup (alpha - alpha0 - lam*t)^gamma * ||u(t)||_alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError


@dataclass(frozen=True)
class ScaleWindow:
    """Bookkeeping for the alpha-interval and the derived horizons.

    ``lam`` is the horizon slope (1/time); ``r`` may be ``math.inf`` for an
    unconstrained admissible ball.
    """

    alpha_star: float
    alpha0: float
    alpha_top: float
    beta: float = 0.0
    gamma: float = 0.5
    lam: float | None = None
    r: float = math.inf
    T: float = 1.0

    def __post_init__(self):
        if not (self.alpha_star < self.alpha0 < self.alpha_top):
            raise DomainError(
                f"need alpha_star < alpha0 < alpha_top, got "
                f"{self.alpha_star}, {self.alpha0}, {self.alpha_top}"
            )
        if not (0.0 <= self.beta < 0.5):
            raise DomainError(f"beta must lie in [0, 1/2), got {self.beta}")
        if not (self.beta < self.gamma < 1.0 - self.beta):
            raise DomainError(
                f"gamma must lie in (beta, 1-beta) = ({self.beta}, {1 - self.beta}), "
                f"got {self.gamma}"
            )
        if self.lam is not None and not self.lam > 0.0:
            raise DomainError(f"horizon slope must be positive, got {self.lam}")
        if not self.T > 0.0:
            raise DomainError(f"T must be positive, got {self.T}")
        if not self.r > 0.0:
            raise DomainError(f"r must be positive (inf allowed), got {self.r}")

    @property
    def width(self) -> float:
        """Width alpha_top - alpha0 of the working window."""
        return self.alpha_top - self.alpha0

    def with_lam(self, lam: float) -> "ScaleWindow":
        return replace(self, lam=lam)

    def require_lam(self) -> float:
        if self.lam is None:
            raise DomainError("horizon slope lam is unset; resolve it first")
        return self.lam

    def horizon(self, alpha: float | None = None) -> float:
        """Blow-up time (alpha - alpha0)/lam of the triangle at scale alpha."""
        lam = self.require_lam()
        if alpha is None:
            alpha = self.alpha_top
        return (alpha - self.alpha0) / lam


@dataclass(frozen=True)
class OvcyannikovConstants:
    """Everything the horizon-slope threshold needs.

    c1/beta bound the evolution system, c2 is the scale-Lipschitz constant of
    the perturbation, c3 bounds the perturbation at the initial datum, cx is
    the Lipschitz constant of t -> U(t,0)x and x_norm = ||x||_{alpha_star}.
    """

    c1: float
    beta: float
    c2: float
    c3: float
    cx: float
    x_norm: float

    def __post_init__(self):
        if not self.c1 > 0:
            raise DomainError("c1 must be strictly positive")
        if self.c2 < 0 or self.c3 < 0:
            # zero is allowed: a vanishing perturbation is a legitimate model
            raise DomainError("c2 and c3 must be nonnegative")
        if self.cx < 0 or self.x_norm < 0:
            raise DomainError("cx and x_norm must be nonnegative")
        if not (0.0 <= self.beta < 0.5):
            raise DomainError(f"beta must lie in [0, 1/2), got {self.beta}")


def time_horizon(alpha: float, window: ScaleWindow, t_prime: float) -> float:
    """Linear horizon (alpha - alpha0)/(alpha_top - alpha0) * t_prime.

    Vanishes at alpha = alpha0 and equals t_prime at alpha = alpha_top.
    """
    if not (window.alpha0 <= alpha <= window.alpha_top):
        raise DomainError(
            f"alpha = {alpha} outside [{window.alpha0}, {window.alpha_top}]"
        )
    if not (0.0 < t_prime <= window.T):
        raise DomainError(f"t_prime = {t_prime} outside (0, {window.T}]")
    return (alpha - window.alpha0) / (window.alpha_top - window.alpha0) * t_prime


def lambda0(
    window: ScaleWindow, consts: OvcyannikovConstants, r_prime: float | None = None
) -> float:
    """Smallest admissible horizon slope, as a four-term maximum.

    Any slope strictly above this value makes the integral map a contraction
    on the weighted space; 1/inf is read as 0 when r_prime is infinite.
    """
    if r_prime is None:
        r_prime = window.r
    if not (0.0 < r_prime <= window.r):
        raise DomainError(f"r_prime = {r_prime} outside (0, {window.r}]")
    if consts.beta != window.beta:
        raise DomainError(
            f"constants declare beta = {consts.beta}, window has beta = {window.beta}"
        )
    beta = window.beta
    gamma = window.gamma
    # __post_init__ already guarantees beta < gamma < 1 - beta
    a_span = window.alpha_top - window.alpha_star
    a_width = window.alpha_top - window.alpha0

    t1 = a_span / window.T
    t2 = 2.0 ** (2.0 * gamma + 1.0 - beta) * consts.c1 * consts.c2 / (gamma - beta)
    t3 = (
        4.0 ** (1.0 - beta) * consts.c2 * a_width**beta / (gamma * (1.0 + consts.x_norm))
        + 2.0 ** (2.0 + gamma) * consts.c1 * consts.c2 / gamma
    )
    if math.isinf(r_prime):
        t4 = 0.0
    else:
        t4 = (
            consts.cx * a_width / r_prime
            + consts.c1
            * (consts.c3 / (window.alpha0 - window.alpha_star) + consts.cx)
            * a_width
            * (1.0 + consts.x_norm)
            / ((1.0 - gamma) * r_prime)
        )
    return max(t1, t2, t3, t4)


def lambda0_terms(
    window: ScaleWindow, consts: OvcyannikovConstants, r_prime: float | None = None
) -> dict[str, float]:
    """Audit trail: the four individual max-terms behind :func:`lambda0`."""
    if r_prime is None:
        r_prime = window.r
    full = lambda0(window, consts, r_prime)
    beta, gamma = window.beta, window.gamma
    a_width = window.alpha_top - window.alpha0
    if math.isinf(r_prime):
        t4 = 0.0
    else:
        t4 = (
            consts.cx * a_width / r_prime
            + consts.c1
            * (consts.c3 / (window.alpha0 - window.alpha_star) + consts.cx)
            * a_width
            * (1.0 + consts.x_norm)
            / ((1.0 - gamma) * r_prime)
        )
    return {
        "time_span": (window.alpha_top - window.alpha_star) / window.T,
        "contraction": 2.0 ** (2.0 * gamma + 1.0 - beta)
        * consts.c1
        * consts.c2
        / (gamma - beta),
        "monitor": 4.0 ** (1.0 - beta)
        * consts.c2
        * a_width**beta
        / (gamma * (1.0 + consts.x_norm))
        + 2.0 ** (2.0 + gamma) * consts.c1 * consts.c2 / gamma,
        "radius": t4,
        "lambda0": full,
    }


def weighted_gamma_norm(u, window: ScaleWindow) -> float:
    """Discrete surrogate of the weighted sup-norm over the (t, alpha) triangle.

    ``u`` must expose ``t_grid``, ``alpha_grid``, ``mask`` (node admissibility)
    and ``norm_at(j, alpha)`` returning ||u(t_j)||_alpha.  Returns the maximum
    of (alpha - alpha0 - lam*t)^gamma * ||u(t)||_alpha over admissible nodes.
    """
    lam = window.require_lam()
    if len(u.t_grid) == 0 or len(u.alpha_grid) == 0:
        raise DomainError("empty (t, alpha) grid")
    best = 0.0
    for i, alpha in enumerate(u.alpha_grid):
        for j, t in enumerate(u.t_grid):
            if not u.mask[j, i]:
                continue
            w = (alpha - window.alpha0 - lam * t) ** window.gamma
            val = w * u.norm_at(j, alpha)
            if val > best:
                best = val
    return best
