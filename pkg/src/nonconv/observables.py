"""Multi-argument observables, centering, and the telescoping decomposition.

An observable F takes an ordered tuple of `arity` process values.  Its
centering constant is the mean under the product of marginals, and the
decomposition writes F minus that constant as a sum of components F_i, where
F_i depends on the first i arguments only and integrates to zero in its last
argument.  Everything here is exact for finite discrete marginals; nothing is
estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from nonconv.budget import ensure_within_budget
from nonconv.errors import ConfigError
from nonconv.indexing import IndexFamily
from nonconv.processes import (
    DoublingMapModel,
    FiniteLaw,
    IIDModel,
    MarkovChainModel,
    ProcessModel,
    _matrix_power,
    _tuples,
    doubling_to_markov,
    sample_paths,
)

_CHUNK_ROWS = 1 << 21  # evaluation chunk for tuple grids


@dataclass(frozen=True, eq=False)
class Observable:
    """Vectorized observable with declared regularity constants.

    ``fn`` maps an array of argument tuples, shape (n, arity, dim), to (n,)
    values.  ``bound_const`` (K), ``holder_exp`` (kappa) and ``growth_exp``
    (lambda) declare the regularity class: growth_exp = 0 means bounded by K.
    ``product_factors``, when present, give F as a product of one-argument
    factors (used by exact variance formulas and product decoupling bounds).
    """

    arity: int
    dim: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    bound_const: float
    holder_exp: float = 1.0
    growth_exp: float = 0.0
    name: str = "custom"
    product_factors: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if self.arity < 1 or self.dim < 1:
            raise ConfigError("arity and dim must be >= 1")
        if self.bound_const <= 0 or not (0 < self.holder_exp <= 1) or self.growth_exp < 0:
            raise ConfigError("need K > 0, kappa in (0, 1], lambda >= 0")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 2:
            pts = pts[None]
        if pts.shape[-2:] != (self.arity, self.dim):
            raise ConfigError(f"expected (..., {self.arity}, {self.dim}) argument tuples")
        flat = pts.reshape(-1, self.arity, self.dim)
        out = np.asarray(self.fn(flat), dtype=float)
        if out.shape != (flat.shape[0],):
            raise ConfigError("observable evaluator must return one value per tuple")
        return out.reshape(pts.shape[:-2])


@dataclass(frozen=True, eq=False)
class CenteredObservable:
    """Observable with its centering constant and telescoping components.

    components[i-1] takes (n, i, dim) arrays; the components sum to
    F - mean, and each integrates to zero in its final argument under the
    marginal law used for the decomposition.
    """

    base: Observable
    law: FiniteLaw
    mean: float
    components: tuple[Callable[[np.ndarray], np.ndarray], ...] = field(repr=False)
    component_sups: tuple[float, ...] = ()

    @property
    def arity(self) -> int:
        return self.base.arity

    def centered(self, points: np.ndarray) -> np.ndarray:
        return self.base(points) - self.mean


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def product_observable(arity: int, dim: int = 1, coord: int = 0, value_bound: float = 1.0) -> Observable:
    """F = product of one coordinate across arguments; K for the box |x| <= value_bound."""
    b = float(value_bound)

    def fn(pts):
        return np.prod(pts[:, :, coord], axis=1)

    factors = tuple((lambda p: p[:, coord]) for _ in range(arity))
    return Observable(
        arity=arity,
        dim=dim,
        fn=fn,
        bound_const=max(b, 1.0) ** arity,
        holder_exp=1.0,
        growth_exp=0.0,
        name="product",
        product_factors=factors,
    )


def sum_observable(arity: int, dim: int = 1, coord: int = 0, growth_exp: float = 1.0,
                   bound_const: float = 1.0) -> Observable:
    """F = sum of one coordinate across arguments (growth exponent 1 by default)."""

    def fn(pts):
        return np.sum(pts[:, :, coord], axis=1)

    return Observable(
        arity=arity,
        dim=dim,
        fn=fn,
        bound_const=bound_const,
        holder_exp=1.0,
        growth_exp=growth_exp,
        name="sum",
    )


def indicator_product_observable(
    arity: int, thresholds: Sequence[float], dim: int = 1, coord: int = 0
) -> Observable:
    """F = product of 1[x_i >= t_i]; meaningful for finite-alphabet models,
    where the declared regularity is never exercised between atoms."""
    t = np.asarray(thresholds, dtype=float)
    if t.shape != (arity,):
        raise ConfigError("need one threshold per argument")

    def fn(pts):
        return np.prod(pts[:, :, coord] >= t[None, :], axis=1).astype(float)

    return Observable(
        arity=arity, dim=dim, fn=fn, bound_const=1.0, holder_exp=1.0,
        growth_exp=0.0, name="indicator-product",
    )


def clipped_poly_observable(
    arity: int,
    coeffs: Sequence[float],
    degrees: Sequence[int],
    clip: float,
    dim: int = 1,
    coord: int = 0,
    value_bound: float = 1.0,
) -> Observable:
    """F = clip(sum_i c_i x_i^d_i, [-clip, clip]) with K sized for the box."""
    c = np.asarray(coeffs, dtype=float)
    d = np.asarray(degrees, dtype=int)
    if c.shape != (arity,) or d.shape != (arity,) or np.any(d < 1) or clip <= 0:
        raise ConfigError("need per-argument coefficients, degrees >= 1, clip > 0")
    b = float(value_bound)
    lip = float(np.max(np.abs(c) * d * np.maximum(b, 1.0) ** (d - 1)))

    def fn(pts):
        x = pts[:, :, coord]
        return np.clip(np.sum(c[None, :] * x ** d[None, :], axis=1), -clip, clip)

    return Observable(
        arity=arity, dim=dim, fn=fn, bound_const=max(clip, lip, 1e-12),
        holder_exp=1.0, growth_exp=0.0, name="clipped-polynomial",
    )


CATALOG = {
    "product": product_observable,
    "sum": sum_observable,
    "indicator-product": indicator_product_observable,
    "clipped-polynomial": clipped_poly_observable,
}


# ---------------------------------------------------------------------------
# centering and decomposition
# ---------------------------------------------------------------------------


def _tuple_grid(law: FiniteLaw, length: int) -> tuple[np.ndarray, np.ndarray]:
    """All atom tuples of a given length with their product weights."""
    tuples = _tuples(law.atoms.shape[0], length)
    weights = np.prod(law.probs[tuples], axis=1)
    return law.atoms[tuples], weights  # (T, length, dim), (T,)


def centering_constant(obs: Observable, law: FiniteLaw) -> float:
    """Mean of F under the product of marginals, by exact atom enumeration."""
    pts, w = _tuple_grid(law, obs.arity)
    ensure_within_budget(pts.nbytes, "centering grid")
    return float(obs(pts) @ w)


def _partial_average(obs: Observable, law: FiniteLaw, keep: int) -> Callable[[np.ndarray], np.ndarray]:
    """Average of F over its last (arity - keep) arguments as a function of the first ``keep``."""
    tail = obs.arity - keep
    if tail == 0:
        return lambda x: obs(x)
    z, w = _tuple_grid(law, tail)  # (T, tail, dim)
    n_tail = z.shape[0]

    def g(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        out = np.empty(n)
        step = max(1, _CHUNK_ROWS // max(n_tail, 1))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            xx = np.repeat(x[lo:hi, None, :, :], n_tail, axis=1)  # (m, T, keep, dim)
            zz = np.broadcast_to(z[None], (hi - lo, n_tail, tail, obs.dim))
            pts = np.concatenate([xx, zz], axis=2).reshape(-1, obs.arity, obs.dim)
            out[lo:hi] = obs(pts).reshape(hi - lo, n_tail) @ w
        return out

    return g


def decompose(obs: Observable, law: FiniteLaw) -> CenteredObservable:
    """Telescoping decomposition of F - mean into per-coordinate components.

    With G_i the average of F over all but the first i arguments, the i-th
    component is G_i - G_{i-1}; the first one absorbs the centering constant.
    Component sup norms are taken over the exact atom grid.
    """
    mean = centering_constant(obs, law)
    partials = [_partial_average(obs, law, i) for i in range(1, obs.arity + 1)]

    def make_component(i: int) -> Callable[[np.ndarray], np.ndarray]:
        if i == 1:
            return lambda x: partials[0](x) - mean
        return lambda x: partials[i - 1](x) - partials[i - 2](x[:, : i - 1, :])

    components = tuple(make_component(i) for i in range(1, obs.arity + 1))
    sups = []
    for i in range(1, obs.arity + 1):
        pts, _ = _tuple_grid(law, i)
        sups.append(float(np.max(np.abs(components[i - 1](pts)))))
    return CenteredObservable(
        base=obs, law=law, mean=mean, components=components, component_sups=tuple(sups)
    )


def center(obs: Observable, model: ProcessModel) -> CenteredObservable:
    """Decompose against the marginal law of a model."""
    return decompose(obs, model.marginal())


# ---------------------------------------------------------------------------
# sums along an index family
# ---------------------------------------------------------------------------


def family_indices(family: IndexFamily, n_terms: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique index set for terms 1..n_terms and the (term, slot) -> position map."""
    ns = np.arange(family.ray_start, family.ray_start + n_terms, dtype=np.int64)
    cols = family.columns(ns)  # (N, arity)
    uniq, inverse = np.unique(cols, return_inverse=True)
    return uniq, inverse.reshape(cols.shape)


def batch_sums(
    model: ProcessModel,
    centered: CenteredObservable,
    family: IndexFamily,
    n_terms: int,
    master_seed: int,
    n_replicates: int,
    first_replicate: int = 0,
) -> np.ndarray:
    """Centered sums S_N for a block of replicates, shape (n_replicates,).

    Each replicate draws the process at the union of family indices from its
    own counter-based stream, evaluates F at the per-term argument tuples,
    subtracts the centering constant, and reduces in fixed index order.
    """
    uniq, positions = family_indices(family, n_terms)
    ensure_within_budget(
        n_replicates * (uniq.size + n_terms * centered.arity) * model.dim * 8 * 2,
        "sum evaluation block",
    )
    paths = sample_paths(model, uniq, master_seed, n_replicates, first_replicate)
    args = paths[:, positions, :]  # (R, N, arity, dim)
    vals = centered.base(args.reshape(-1, centered.arity, model.dim)).reshape(
        n_replicates, n_terms
    )
    return np.sum(vals - centered.mean, axis=1)


def nonconv_sum(
    model: ProcessModel,
    centered: CenteredObservable,
    family: IndexFamily,
    n_terms: int,
    seed: int,
) -> float:
    """One realization of the centered sum S_N."""
    return float(batch_sums(model, centered, family, n_terms, seed, 1)[0])


def exact_mean_SN(
    model: ProcessModel,
    centered: CenteredObservable,
    family: IndexFamily,
    n_terms: int,
) -> float:
    """E S_N by exact enumeration of the per-term joint laws.

    For a chain the joint law of the states at one term's indices is the
    stationary start chained through gap kernels; the observable is evaluated
    once on the full state grid and reweighted per term.  For i.i.d. models
    every term has mean equal to the centering constant, so E S_N = 0.  The
    tabulated doubling map goes through its exact chain representation.
    """
    if isinstance(model, IIDModel):
        return 0.0
    if isinstance(model, DoublingMapModel):
        model = doubling_to_markov(model)
    if not isinstance(model, MarkovChainModel):
        raise ConfigError(f"unknown model kind: {model!r}")
    arity = centered.arity
    S = model.n_states
    grid = _tuples(S, arity)
    f_vals = centered.base(model.values[grid]) - centered.mean  # (S**arity,)
    ns = np.arange(family.ray_start, family.ray_start + n_terms, dtype=np.int64)
    cols = family.columns(ns)
    power_cache: dict[int, np.ndarray] = {}

    def kernel(g: int) -> np.ndarray:
        if g not in power_cache:
            power_cache[g] = _matrix_power(model.transition, g)
        return power_cache[g]

    total = 0.0
    comp = 0.0
    for row in cols:
        w = model.stationary[grid[:, 0]].copy()
        for t in range(1, arity):
            w *= kernel(int(row[t] - row[t - 1]))[grid[:, t - 1], grid[:, t]]
        term = float(w @ f_vals)
        # compensated accumulation over terms
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return total


def exact_d_squared(
    model: ProcessModel, centered: CenteredObservable, family: IndexFamily
) -> float | None:
    """Exact limiting variance per term when a closed form applies, else None.

    i.i.d. with arity 1: the marginal variance of F.  i.i.d. with a product
    observable whose factors are all centered: cross terms vanish because any
    two distinct terms of an ordered family differ in at least one index, so
    the limit is the product of the factor second moments.
    """
    if not isinstance(model, IIDModel):
        return None
    law = centered.law
    if centered.arity == 1:
        pts = law.atoms[:, None, :]
        vals = centered.base(pts) - centered.mean
        return float(law.probs @ vals**2)
    factors = centered.base.product_factors
    if factors is None:
        return None
    out = 1.0
    for f in factors:
        fv = np.asarray(f(law.atoms), dtype=float)
        if abs(float(law.probs @ fv)) > 1e-12:
            return None  # a non-centered factor leaves live cross terms
        out *= float(law.probs @ fv**2)
    return out


# ---------------------------------------------------------------------------
# regularity spot checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    bound_margin: float
    holder_margin: float
    passed: bool


def regularity_check(
    obs: Observable, law: FiniteLaw, n_pairs: int = 2000, seed: int = 0
) -> RegularityReport:
    """Verify the declared (K, kappa, lambda) on sampled atom tuples.

    Checks |F(x)| <= K (1 + sum |x_i|^lambda) and the Holder-in-each-argument
    inequality on random tuple pairs.  A certificate over sampled points only.
    """
    rng = np.random.default_rng(seed)
    n_atoms = law.atoms.shape[0]
    ix = rng.integers(0, n_atoms, size=(n_pairs, obs.arity))
    iy = rng.integers(0, n_atoms, size=(n_pairs, obs.arity))
    x = law.atoms[ix]
    y = law.atoms[iy]
    fx = obs(x)
    fy = obs(y)
    norm_x = np.linalg.norm(x, axis=2)
    norm_y = np.linalg.norm(y, axis=2)
    lam = obs.growth_exp
    grow_x = 1.0 + (np.sum(norm_x**lam, axis=1) if lam > 0 else 0.0)
    grow_y = 1.0 + (np.sum(norm_y**lam, axis=1) if lam > 0 else 0.0)
    bound_margin = float(np.max(np.abs(fx) - obs.bound_const * grow_x))
    diff = np.sum(np.linalg.norm(x - y, axis=2) ** obs.holder_exp, axis=1)
    allowed = obs.bound_const * (1.0 + (grow_x - 1.0) + (grow_y - 1.0)) * diff
    with np.errstate(invalid="ignore"):
        holder_margin = float(np.max(np.abs(fx - fy) - allowed))
    return RegularityReport(
        bound_margin=bound_margin,
        holder_margin=holder_margin,
        passed=bound_margin <= 1e-9 and holder_margin <= 1e-9,
    )
