"""Closed-form evaluators for the concentration, deviation, and moment bounds.

Everything here is a deterministic formula: exponential concentration for the
normalized sum, the Chernoff tail from the martingale constants, the
moderate-deviation envelope and rate, the Berry-Esseen bound, the
moment-versus-Gaussian bound, and the variance envelope.  No constant is
baked in; each named constant arrives through BoundConstants with its
provenance, normally from the calibration routines in the Monte Carlo layer.

All evaluators work in log space internally and document their monotone
directions, which the property tests exercise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from nonconv.errors import ConfigError, OutOfWindowError

_REGIME_ALIASES = {
    "bounded": "bounded",
    "a1": "bounded",
    "unbounded": "unbounded",
    "a2": "unbounded",
}


@dataclass(frozen=True)
class AssumptionParams:
    """Regularity regime and the exponent gamma it induces.

    The bounded regime needs only the mixing decay (a, d, eta) and yields
    gamma = 1/eta.  The unbounded regime adds the moment-growth constants
    (M, zeta) for E|F|^k <= M^k (k!)^zeta, the polynomial growth exponent of
    the observable, and the tail-moment constant tau; it yields
    gamma = 1/eta + growth_exp * zeta.  Sparse index maps flatten the
    exponent to 1/(eta * l^2) through ``sparse_gamma``.
    """

    regime: str
    a: float
    d: float
    eta: float
    M: float | None = None
    zeta: float | None = None
    growth_exp: float | None = None
    tau: float | None = None

    def __post_init__(self):
        norm = _REGIME_ALIASES.get(self.regime.lower())
        if norm is None:
            raise ConfigError(f"unknown regime {self.regime!r}")
        object.__setattr__(self, "regime", norm)
        if self.a <= 0 or self.d <= 0 or self.eta <= 0:
            raise ConfigError("decay parameters a, d, eta must be positive")
        if norm == "unbounded":
            for name in ("M", "zeta", "growth_exp", "tau"):
                v = getattr(self, name)
                if v is None or not math.isfinite(v) or v < 0:
                    raise ConfigError(f"unbounded regime needs finite nonnegative {name}")
            if self.growth_exp < 1:
                raise ConfigError("unbounded regime needs growth_exp >= 1")

    @property
    def gamma(self) -> float:
        if self.regime == "bounded":
            return 1.0 / self.eta
        return 1.0 / self.eta + self.growth_exp * self.zeta

    def sparse_gamma(self, arity: int) -> float:
        """Exponent under index maps growing fast enough to decouple levels."""
        if arity < 1:
            raise ConfigError("arity must be >= 1")
        return 1.0 / (self.eta * arity**2)


_CONSTANT_FIELDS = (
    "c1", "c2", "c3", "c4", "c5", "c6", "c7",
    "c0", "a0", "a_ell", "c_ell", "C0", "C1", "B",
)


@dataclass
class BoundConstants:
    """Named positive constants with per-constant provenance.

    The theory only asserts these exist; values are either configured by the
    user or produced by calibration, and ``sources`` records which for each.
    """

    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    c5: float = 1.0
    c6: float = 1.0
    c7: float = 1.0
    c0: float = 1.0
    a0: float = 1.0
    a_ell: float = 1.0
    c_ell: float = 1.0
    C0: float = 1.0
    C1: float = 1.0
    B: float = 1.0
    sources: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in _CONSTANT_FIELDS:
            if getattr(self, name) <= 0:
                raise ConfigError(f"constant {name} must be positive")
            self.sources.setdefault(name, "configured")

    def set_calibrated(self, **values: float) -> "BoundConstants":
        for name, v in values.items():
            if name not in _CONSTANT_FIELDS:
                raise ConfigError(f"unknown constant {name}")
            if v <= 0:
                raise ConfigError(f"constant {name} must be positive")
            setattr(self, name, float(v))
            self.sources[name] = "calibrated"
        return self


# ---------------------------------------------------------------------------
# exponential concentration for the normalized sum
# ---------------------------------------------------------------------------


def concentration_log(x: float, n_terms: float, c1: float, c2: float, gamma: float) -> float:
    """log of the concentration bound for P(sum/sqrt(N) >= x).

    Returns -x^2 / (2 (c1 + c2 x N^(-1/(2+4 gamma)))^((1+2 gamma)/(1+gamma))).
    Nonincreasing in x, nondecreasing in c1 and c2 (a larger denominator
    weakens the bound).
    """
    if c1 <= 0 or c2 <= 0 or gamma <= 0:
        raise ConfigError("need c1, c2, gamma > 0")
    if x < 0 or n_terms < 1:
        raise ConfigError("need x >= 0 and n_terms >= 1")
    damp = math.exp(-math.log(n_terms) / (2.0 + 4.0 * gamma))
    base = c1 + c2 * x * damp
    expo = (1.0 + 2.0 * gamma) / (1.0 + gamma)
    return -(x * x) / (2.0 * math.exp(expo * math.log(base)))


def concentration_bound(x: float, n_terms: float, c1: float, c2: float, gamma: float) -> float:
    return math.exp(concentration_log(x, n_terms, c1, c2, gamma))


def epsilon_shape_log(eps: float, n_terms: float, c7: float, gamma: float) -> float:
    """log of the linear-scale display exp(-c7 (eps N)^(1/(1+gamma)))."""
    if eps <= 0 or n_terms < 1 or c7 <= 0 or gamma <= 0:
        raise ConfigError("need eps, c7, gamma > 0 and n_terms >= 1")
    return -c7 * (eps * n_terms) ** (1.0 / (1.0 + gamma))


def epsilon_window_start(eps: float, c6: float, gamma: float) -> float:
    """Smallest N of the window N >= c6 eps^(-2 - 1/gamma)."""
    if eps <= 0 or c6 <= 0 or gamma <= 0:
        raise ConfigError("need eps, c6, gamma > 0")
    return c6 * eps ** (-2.0 - 1.0 / gamma)


def dominance_window_constant(c1: float, c2: float, gamma: float, margin: float = 4.0) -> float:
    """The c6 making the window the region where the x-linear denominator term
    exceeds ``margin`` times the constant one at x = eps sqrt(N).

    Solving c2 eps N^(gamma/(1+2 gamma)) >= margin c1 for N gives
    N >= (margin c1 / c2)^((1+2 gamma)/gamma) eps^(-2-1/gamma).
    """
    if margin < 1:
        raise ConfigError("margin must be >= 1")
    if c1 <= 0 or c2 <= 0 or gamma <= 0:
        raise ConfigError("need c1, c2, gamma > 0")
    return (margin * c1 / c2) ** ((1.0 + 2.0 * gamma) / gamma)


@dataclass(frozen=True)
class SlopeCheck:
    slope: float
    target: float
    rel_err: float
    c7: float
    n_window: tuple[float, float]
    passed: bool


def epsilon_slope_check(
    eps: float,
    n_grid,
    c1: float,
    c2: float,
    gamma: float,
    tol: float = 0.05,
) -> SlopeCheck:
    """Fit the log-log slope of the concentration exponent in the linear regime.

    Deviations at the linear scale eps*N correspond to x = eps sqrt(N) for
    the normalized sum.  On the dominance window the negated log-bound grows
    like (eps N)^(1/(1+gamma)); the fitted slope of log(-log bound) against
    log(eps N) is compared to that exponent, and the reported c7 is the
    largest constant keeping the displayed shape above the bound on the grid.
    """
    grid = np.asarray(n_grid, dtype=float)
    if grid.size < 2:
        raise ConfigError("need at least two grid points")
    neg_logs = np.array(
        [-concentration_log(eps * math.sqrt(n), n, c1, c2, gamma) for n in grid]
    )
    t = np.log(eps * grid)
    slope, _ = np.polyfit(t, np.log(neg_logs), 1)
    target = 1.0 / (1.0 + gamma)
    rel = abs(slope - target) / target
    c7 = float(np.min(neg_logs / (eps * grid) ** target))
    return SlopeCheck(
        slope=float(slope),
        target=target,
        rel_err=float(rel),
        c7=c7,
        n_window=(float(grid.min()), float(grid.max())),
        passed=rel <= tol,
    )


# ---------------------------------------------------------------------------
# Chernoff tail from the martingale constants
# ---------------------------------------------------------------------------


def chernoff_tail_log(
    t: float, n_terms: float, arity: int, delta1: float, delta2: float, b_const: float
) -> float:
    """log bound for P(S_N >= t + B delta2): -t^2 / (4 B^2 N arity delta1^2).

    Nonincreasing in t; nondecreasing in B and delta1.  Doubling t quarters
    the log exactly.
    """
    if delta1 <= 0:
        raise ConfigError("delta1 must be positive")
    if t < 0 or n_terms < 1 or arity < 1 or b_const <= 0 or delta2 < 0:
        raise ConfigError("bad Chernoff arguments")
    return -(t * t) / (4.0 * b_const * b_const * n_terms * arity * delta1 * delta1)


def chernoff_tail_bound(
    t: float, n_terms: float, arity: int, delta1: float, delta2: float, b_const: float
) -> float:
    return math.exp(chernoff_tail_log(t, n_terms, arity, delta1, delta2, b_const))


def chernoff_threshold(t: float, delta2: float, b_const: float) -> float:
    """The event threshold t + B delta2 the tail bound refers to."""
    return t + b_const * delta2


def chernoff_lambda_star(t: float, n_terms: float, arity: int, delta2: float) -> float:
    """The tuning value lambda = t / (2 arity N delta2^2) used in the derivation."""
    if t < 0 or n_terms < 1 or arity < 1 or delta2 <= 0:
        raise ConfigError("bad lambda-star arguments")
    return t / (2.0 * arity * n_terms * delta2 * delta2)


def epsilon_rate_constant(arity: int, delta1: float, delta2: float) -> float:
    """The linear-scale rate constant c = delta2 / (16 arity delta1^2),
    from the tail bound at t = eps N / 2 in the exact-representation case
    delta2 = delta1."""
    if arity < 1 or delta1 <= 0 or delta2 <= 0:
        raise ConfigError("bad rate-constant arguments")
    return delta2 / (16.0 * arity * delta1 * delta1)


def mgf_exponent_bound(
    lam: float, n_terms: float, arity: int, delta1: float, delta2: float, b_const: float
) -> float:
    """log of the MGF bound: B lam^2 N arity delta1 + B |lam| delta2."""
    if delta1 <= 0 or delta2 < 0 or b_const <= 0 or n_terms < 1 or arity < 1:
        raise ConfigError("bad MGF-bound arguments")
    return b_const * lam * lam * n_terms * arity * delta1 + b_const * abs(lam) * delta2


# ---------------------------------------------------------------------------
# moderate deviations
# ---------------------------------------------------------------------------


def moddev_window_edge(n_terms: float, c4: float, gamma: float) -> float:
    """Upper end c4 N^(1/(2+4 gamma)) of the x range the envelope covers."""
    if c4 <= 0 or gamma <= 0 or n_terms < 1:
        raise ConfigError("need c4, gamma > 0 and n_terms >= 1")
    return c4 * n_terms ** (1.0 / (2.0 + 4.0 * gamma))


def moddev_envelope(
    x: float, n_terms: float, c5: float, gamma: float, c4: float | None = None
) -> float:
    """Envelope c5 (1 + x^3) N^(-1/(2+4 gamma)) for the log-ratio of the
    normalized tail to the Gaussian tail.

    Monotone increasing in x.  When c4 is supplied, x at or beyond the window
    edge raises OutOfWindowError; the inequality is simply not asserted there
    and extrapolating would misreport it.
    """
    if x < 0:
        raise ConfigError("x must be nonnegative")
    if c5 <= 0 or gamma <= 0 or n_terms < 1:
        raise ConfigError("need c5, gamma > 0 and n_terms >= 1")
    if c4 is not None:
        edge = moddev_window_edge(n_terms, c4, gamma)
        if x >= edge:
            raise OutOfWindowError(
                f"x = {x:g} is outside the validity window [0, {edge:g})"
            )
    return c5 * (1.0 + x**3) * n_terms ** (-1.0 / (2.0 + 4.0 * gamma))


def mdp_rate(x: float) -> float:
    """Quadratic rate x^2/2 of the moderate-deviation principle."""
    return 0.5 * x * x


def mdp_speed(a_n: float) -> float:
    """Speed a_N^2 attached to the scaling sequence."""
    if a_n <= 0:
        raise ConfigError("a_N must be positive")
    return a_n * a_n


def mdp_normalization(d_const: float, n_terms: float, a_n: float) -> float:
    """The factor 1 / (D sqrt(N) a_N) applied to S_N."""
    if d_const <= 0 or n_terms < 1 or a_n <= 0:
        raise ConfigError("bad normalization arguments")
    return 1.0 / (d_const * math.sqrt(n_terms) * a_n)


@dataclass(frozen=True)
class MdpValidity:
    grows: bool
    damped_vanishes: bool
    first_a: float
    last_a: float
    first_damped: float
    last_damped: float
    passed: bool


def mdp_validity(
    a_fn: Callable[[np.ndarray], np.ndarray], gamma: float, n_grid
) -> MdpValidity:
    """Numerical check of a_N -> infinity and a_N N^(-1/(2+4 gamma)) -> 0.

    Both limits are verified monotonically on the scanned grid: a_N strictly
    increasing, the damped sequence strictly decreasing with its last value
    below half its first.  A grid cannot prove a limit; this rejects scaling
    sequences that visibly violate the growth window.
    """
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    grid = np.asarray(n_grid, dtype=float)
    if grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ConfigError("need an increasing grid with >= 3 points")
    a = np.asarray(a_fn(grid), dtype=float)
    if a.shape != grid.shape or np.any(a <= 0):
        raise ConfigError("a_N must be positive on the grid")
    damped = a * grid ** (-1.0 / (2.0 + 4.0 * gamma))
    grows = bool(np.all(np.diff(a) > 0))
    vanishes = bool(np.all(np.diff(damped) < 0) and damped[-1] < 0.5 * damped[0])
    return MdpValidity(
        grows=grows,
        damped_vanishes=vanishes,
        first_a=float(a[0]),
        last_a=float(a[-1]),
        first_damped=float(damped[0]),
        last_damped=float(damped[-1]),
        passed=grows and vanishes,
    )


# ---------------------------------------------------------------------------
# Berry-Esseen, moment comparison, variance envelope
# ---------------------------------------------------------------------------


def berry_esseen_constant(gamma: float) -> float:
    """c_gamma = (1/6) (sqrt(2)/6)^(1/(1+2 gamma)); tends to 1/6 as gamma grows."""
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    return (1.0 / 6.0) * (math.sqrt(2.0) / 6.0) ** (1.0 / (1.0 + 2.0 * gamma))


def berry_esseen_bound(delta: float, gamma: float) -> float:
    """Kolmogorov-distance bound c_gamma Delta^(-1/(1+2 gamma)).

    Decreasing in Delta; scaling Delta by 8 at gamma = 1 halves the bound.
    """
    if delta <= 0:
        raise ConfigError("Delta must be positive")
    return berry_esseen_constant(gamma) * delta ** (-1.0 / (1.0 + 2.0 * gamma))


def momthm_log(p: int, n_terms: float, c0: float, gamma: float) -> float:
    """log of the moment-comparison bound
    c01^p (p!)^(1+gamma) sum_{1 <= u <= (p-1)/2} N^u p^u / (u!)^2,
    with c01 = max(1, c0).  Empty sum (p <= 2) gives -inf: the first two
    moments match the Gaussian surrogate exactly.
    """
    if p < 1 or n_terms < 1 or c0 <= 0 or gamma <= 0:
        raise ConfigError("bad moment-bound arguments")
    u_max = (p - 1) // 2
    if u_max < 1:
        return -math.inf
    c01 = max(1.0, c0)
    u = np.arange(1, u_max + 1)
    terms = u * (math.log(n_terms) + math.log(p)) - 2.0 * gammaln(u + 1)
    return float(
        p * math.log(c01) + (1.0 + gamma) * gammaln(p + 1) + logsumexp(terms)
    )


def momthm_bound(p: int, n_terms: float, c0: float, gamma: float) -> float:
    lg = momthm_log(p, n_terms, c0, gamma)
    return 0.0 if lg == -math.inf else math.exp(lg)


def variance_envelope(n_terms: float, const: float) -> float:
    """Envelope const * sqrt(N) for |variance of S_N - D^2 N|."""
    if n_terms < 1 or const < 0:
        raise ConfigError("need n_terms >= 1 and const >= 0")
    return const * math.sqrt(n_terms)
