"""Two-player Bayesian skill ratings from win/draw outcomes.

Each image carries a Gaussian belief N(mu, sigma^2) per indicator. A win
shifts the winner's mean up and the loser's down via the truncated-Gaussian
correction v(t) = N(t)/Phi(t); a draw pulls both means together. Both
outcomes shrink sigma through the matching w(t) term. Dynamics tau is zero
by default: a fixed image pool does not drift over time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

_STD_NORMAL = NormalDist()

DEFAULT_MU = 25.0
DEFAULT_SIGMA = 25.0 / 3.0


@dataclass(frozen=True)
class Rating:
    mu: float = DEFAULT_MU
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class TrueSkillParams:
    mu0: float = DEFAULT_MU
    sigma0: float = DEFAULT_SIGMA
    beta: float = DEFAULT_SIGMA / 2.0
    tau: float = 0.0
    draw_probability: float = 0.10

    @property
    def draw_margin(self) -> float:
        """Margin within which a match counts as a draw, for two players."""
        return _STD_NORMAL.inv_cdf((1.0 + self.draw_probability) / 2.0) * math.sqrt(2.0) * self.beta


def _pdf(x: float) -> float:
    return _STD_NORMAL.pdf(x)


def _cdf(x: float) -> float:
    return _STD_NORMAL.cdf(x)


def v_win(t: float, eps: float) -> float:
    x = t - eps
    denom = _cdf(x)
    if denom < 1e-300:
        raise ValueError("rating update numerically degenerate")
    return _pdf(x) / denom


def w_win(t: float, eps: float) -> float:
    x = t - eps
    v = v_win(t, eps)
    return v * (v + x)


def v_draw(t: float, eps: float) -> float:
    denom = _cdf(eps - t) - _cdf(-eps - t)
    if denom < 1e-300:
        raise ValueError("rating update numerically degenerate")
    return (_pdf(-eps - t) - _pdf(eps - t)) / denom


def w_draw(t: float, eps: float) -> float:
    a = eps - t
    b = -eps - t
    denom = _cdf(a) - _cdf(b)
    if denom < 1e-300:
        raise ValueError("rating update numerically degenerate")
    v = v_draw(t, eps)
    return v * v + (a * _pdf(a) - b * _pdf(b)) / denom


def _updated(rating: Rating, c: float, v: float, w: float) -> Rating:
    var = rating.sigma**2
    mu = rating.mu + var / c * v
    sigma = math.sqrt(var * (1.0 - var / (c * c) * w))
    return Rating(mu, sigma)


def _prepare(a: Rating, b: Rating, params: TrueSkillParams) -> tuple[Rating, Rating, float]:
    if params.tau > 0:
        a = Rating(a.mu, math.hypot(a.sigma, params.tau))
        b = Rating(b.mu, math.hypot(b.sigma, params.tau))
    c = math.sqrt(2.0 * params.beta**2 + a.sigma**2 + b.sigma**2)
    return a, b, c


def rate_win(winner: Rating, loser: Rating, params: TrueSkillParams | None = None) -> tuple[Rating, Rating]:
    """Posterior (winner, loser) ratings after a decisive comparison."""
    params = params or TrueSkillParams()
    winner, loser, c = _prepare(winner, loser, params)
    t = (winner.mu - loser.mu) / c
    eps = params.draw_margin / c
    v = v_win(t, eps)
    w = w_win(t, eps)
    new_winner = _updated(winner, c, v, w)
    new_loser = Rating(
        loser.mu - loser.sigma**2 / c * v,
        math.sqrt(loser.sigma**2 * (1.0 - loser.sigma**2 / (c * c) * w)),
    )
    return new_winner, new_loser


def rate_draw(a: Rating, b: Rating, params: TrueSkillParams | None = None) -> tuple[Rating, Rating]:
    """Posterior ratings after a drawn comparison (both images gain a point)."""
    params = params or TrueSkillParams()
    a, b, c = _prepare(a, b, params)
    t = (a.mu - b.mu) / c
    eps = params.draw_margin / c
    new_a = _updated(a, c, v_draw(t, eps), w_draw(t, eps))
    new_b = _updated(b, c, v_draw(-t, eps), w_draw(-t, eps))
    return new_a, new_b
