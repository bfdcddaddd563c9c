"""Stationary process models, path sampling, and mixing coefficients.

Three model kinds share one sampling interface:

* finite-state Markov chains (started from the stationary law),
* the dyadic shift ("doubling map") driven by an integer bit reservoir,
* i.i.d. draws from a finite discrete law.

Uniform-mixing and strong-mixing coefficients come with exact brute-force
enumeration oracles over cylinder events, so the closed forms used by the
bound evaluators are checkable on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Sequence, Union

import numpy as np

from nonconv.budget import ensure_within_budget
from nonconv.errors import ConfigError
from nonconv.rng import replicate_rng

_ENUM_BUDGET = 1_000_000  # cap on enumerated state tuples for exact oracles
_TV_NOISE = 1e-12  # float matrix powers cannot resolve TV mass below this


# ---------------------------------------------------------------------------
# laws and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteLaw:
    """Discrete law on finitely many vector atoms."""

    atoms: np.ndarray  # (n_atoms, dim)
    probs: np.ndarray  # (n_atoms,)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 2 or probs.ndim != 1 or atoms.shape[0] != probs.shape[0]:
            raise ConfigError("law atoms and probabilities have mismatched shapes")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigError("law probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.atoms

    def abs_moment(self, k: float) -> float:
        """E |X|^k with the Euclidean norm on vector atoms."""
        norms = np.linalg.norm(self.atoms, axis=1)
        return float(self.probs @ norms**k)

    def tau(self, k: float) -> float:
        """(E |X|^k)^(1/k), the k-th norm of the marginal (sup norm at k = inf)."""
        if k <= 0:
            raise ConfigError("norm index must be positive")
        norms = np.linalg.norm(self.atoms, axis=1)
        if math.isinf(k):
            return float(np.max(norms[self.probs > 0]))
        return self.abs_moment(k) ** (1.0 / k)


@dataclass(frozen=True, eq=False)
class MarkovChainModel:
    """Stationary finite-state chain with a value vector attached to each state."""

    transition: np.ndarray  # (S, S) row-stochastic
    values: np.ndarray  # (S, dim)
    stationary: np.ndarray  # (S,)

    kind = "finite-markov"

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def marginal(self) -> FiniteLaw:
        return FiniteLaw(self.values, self.stationary)


@dataclass(frozen=True, eq=False)
class DoublingMapModel:
    """Dyadic shift observed through a value table on the level-`level` grid.

    The random point is an infinite bit string held as a sliding integer
    window (the bit reservoir); one shift consumes one fresh bit.  Values are
    the table entries, i.e. the underlying function evaluated at dyadic cell
    midpoints.  ``holder_const``/``holder_exp`` declare regularity of that
    underlying function and certify the approximation rate.
    """

    table: np.ndarray  # (2**level, dim)
    level: int
    holder_const: float
    holder_exp: float

    kind = "doubling-map"

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @property
    def reservoir_depth(self) -> int:
        return self.level

    def marginal(self) -> FiniteLaw:
        n = self.table.shape[0]
        return FiniteLaw(self.table, np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class IIDModel:
    """Independent draws from a finite discrete law."""

    law: FiniteLaw

    kind = "iid"

    @property
    def dim(self) -> int:
        return self.law.dim

    def marginal(self) -> FiniteLaw:
        return self.law


ProcessModel = Union[MarkovChainModel, DoublingMapModel, IIDModel]


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Stationary law of an irreducible row-stochastic matrix.

    Solved as the null vector of (P^T - I) with the mass constraint appended;
    residual is checked to 1e-10.
    """
    P = np.asarray(transition, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigError("transition matrix must be square")
    S = P.shape[0]
    if S > 64:
        raise ConfigError(f"chain has {S} states, cap is 64")
    if np.any(P < -1e-14) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-10):
        raise ConfigError("transition matrix must be row-stochastic")
    reach = _reachability(P)
    if not reach.all():
        raise ConfigError("chain is not irreducible")
    A = np.vstack([P.T - np.eye(S), np.ones(S)])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    if np.max(np.abs(pi @ P - pi)) > 1e-10:
        raise ConfigError("stationary solve did not converge")
    return pi


def _reachability(P: np.ndarray) -> np.ndarray:
    adj = P > 0
    reach = adj | np.eye(P.shape[0], dtype=bool)
    for _ in range(P.shape[0]):
        new = reach @ reach
        if (new == reach).all():
            break
        reach = new
    return reach


def markov_model(transition, values) -> MarkovChainModel:
    P = np.asarray(transition, dtype=float)
    pi = stationary_distribution(P)
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != P.shape[0]:
        raise ConfigError("need one value vector per state")
    return MarkovChainModel(transition=P, values=vals, stationary=pi)


def doubling_model(
    f: Callable[[np.ndarray], np.ndarray] | Sequence[float] | np.ndarray,
    level: int,
    holder_const: float = 1.0,
    holder_exp: float = 1.0,
) -> DoublingMapModel:
    """Tabulate ``f`` at level-``level`` dyadic cell midpoints (or accept a table)."""
    if not (1 <= level <= 30):
        raise ConfigError("dyadic level must be in [1, 30]")
    if not (0 < holder_exp <= 1) or holder_const < 0:
        raise ConfigError("need holder_exp in (0,1] and holder_const >= 0")
    n = 1 << level
    if callable(f):
        mids = (np.arange(n) + 0.5) / n
        table = np.asarray(f(mids), dtype=float)
    else:
        table = np.asarray(f, dtype=float)
    if table.ndim == 1:
        table = table[:, None]
    if table.shape[0] != n:
        raise ConfigError(f"value table must have 2**level = {n} rows")
    return DoublingMapModel(
        table=table, level=level, holder_const=float(holder_const), holder_exp=float(holder_exp)
    )


def iid_model(atoms, probs) -> IIDModel:
    return IIDModel(FiniteLaw(np.asarray(atoms, dtype=float), np.asarray(probs, dtype=float)))


def doubling_to_markov(model: DoublingMapModel) -> MarkovChainModel:
    """Exact chain representation of the tabulated dyadic shift.

    The sliding window of `level` bits is itself a Markov chain on 2**level
    states (shift one bit in, uniform), stationary law uniform.  Valid for
    small levels only; chain operations cap the state count at 64.
    """
    L = model.level
    if L > 6:
        raise ConfigError("chain conversion needs level <= 6 (state cap 64)")
    S = 1 << L
    P = np.zeros((S, S))
    mask = S - 1
    for s in range(S):
        nxt = (s << 1) & mask
        P[s, nxt] += 0.5
        P[s, nxt | 1] += 0.5
    return MarkovChainModel(transition=P, values=model.table.copy(), stationary=np.full(S, 1.0 / S))


# ---------------------------------------------------------------------------
# path sampling
# ---------------------------------------------------------------------------


def _check_indices(indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ConfigError("need a nonempty 1-d index array")
    if idx[0] < 1 or np.any(np.diff(idx) <= 0):
        raise ConfigError("indices must be strictly increasing positive integers")
    return idx


def _inverse_cdf(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cum_rows: (n, S) cumulative probabilities per row, u: (n,) uniforms
    nxt = np.sum(cum_rows <= u[:, None], axis=1)
    return np.minimum(nxt, cum_rows.shape[1] - 1)


def sample_paths(
    model: ProcessModel,
    indices,
    master_seed: int,
    n_replicates: int,
    first_replicate: int = 0,
) -> np.ndarray:
    """Values of the process at the requested indices, one row per replicate.

    Returns an array of shape (n_replicates, n_indices, dim).  Replicate
    ``first_replicate + j`` consumes only its own counter-based stream, so any
    batching of replicates reproduces the same rows.  Work and memory scale
    with the number of requested indices, not with the largest index: gaps in
    the index set are jumped with precomputed multi-step transition kernels
    (chains) or by discarding reservoir bits (doubling map).
    """
    idx = _check_indices(indices)
    n_idx = idx.size
    ensure_within_budget(n_replicates * n_idx * (model.dim + 1) * 8, "path sampling block")
    uniforms = np.empty((n_replicates, n_idx))
    for j in range(n_replicates):
        uniforms[j] = replicate_rng(master_seed, first_replicate + j).random(n_idx)

    if isinstance(model, IIDModel):
        cum = np.cumsum(model.law.probs)
        choice = np.minimum(np.searchsorted(cum, uniforms, side="right"), cum.size - 1)
        return model.law.atoms[choice]

    if isinstance(model, MarkovChainModel):
        states = _chain_states(model, idx, uniforms)
        return model.values[states]

    if isinstance(model, DoublingMapModel):
        L = model.level
        mask = (1 << L) - 1
        gaps = np.diff(idx)
        # window at index k holds the L bits after position k; a gap of g
        # shifts g fresh bits in (all L refreshed once g >= L)
        window = (uniforms[:, 0] * (1 << L)).astype(np.int64)
        cells = np.empty((n_replicates, n_idx), dtype=np.int64)
        cells[:, 0] = window
        for t in range(1, n_idx):
            g = int(min(gaps[t - 1], L))
            fresh = (uniforms[:, t] * (1 << g)).astype(np.int64)
            window = ((window << g) | fresh) & mask
            cells[:, t] = window
        return model.table[cells]

    raise ConfigError(f"unknown model kind: {model!r}")


def _chain_states(model: MarkovChainModel, idx: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    gaps = np.diff(idx)
    cum_pow = {int(g): np.cumsum(_matrix_power(model.transition, int(g)), axis=1) for g in set(gaps.tolist())}
    cum_init = np.cumsum(model.stationary)
    states = np.empty(uniforms.shape, dtype=np.int64)
    states[:, 0] = np.minimum(np.searchsorted(cum_init, uniforms[:, 0], side="right"), model.n_states - 1)
    for t in range(1, idx.size):
        rows = cum_pow[int(gaps[t - 1])][states[:, t - 1]]
        states[:, t] = _inverse_cdf(rows, uniforms[:, t])
    return states


def sample_state_paths(
    model: MarkovChainModel,
    indices,
    master_seed: int,
    n_replicates: int,
    first_replicate: int = 0,
) -> np.ndarray:
    """State indices (not values) of a chain at the requested time indices.

    Same streams as sample_paths: the two agree via values[states].
    """
    if not isinstance(model, MarkovChainModel):
        raise ConfigError("state paths exist only for finite chains")
    idx = _check_indices(indices)
    ensure_within_budget(n_replicates * idx.size * 16, "state path block")
    uniforms = np.empty((n_replicates, idx.size))
    for j in range(n_replicates):
        uniforms[j] = replicate_rng(master_seed, first_replicate + j).random(idx.size)
    return _chain_states(model, idx, uniforms)


def sample_at_indices(model: ProcessModel, indices, seed: int) -> dict[int, np.ndarray]:
    """Single realization of the process at ``indices`` under master seed ``seed``."""
    idx = _check_indices(indices)
    row = sample_paths(model, idx, seed, n_replicates=1)[0]
    return {int(k): row[t] for t, k in enumerate(idx)}


def _matrix_power(P: np.ndarray, n: int) -> np.ndarray:
    if n < 0:
        raise ConfigError("nonnegative power required")
    return np.linalg.matrix_power(P, n)


# ---------------------------------------------------------------------------
# mixing coefficients
# ---------------------------------------------------------------------------


def phi_coefficient(model: ProcessModel, n: int) -> float:
    """Uniform-mixing coefficient at gap ``n``; by convention the value at 0 is 1.

    For a chain this is the worst total-variation distance between an n-step
    row and the stationary law: conditioning on any positive-probability past
    event reduces to conditioning on the current state, and the supremum over
    future events of the conditional-minus-marginal gap is the TV distance,
    which is invariant under extending the future window.
    """
    if n < 0:
        raise ConfigError("gap must be nonnegative")
    if n == 0:
        return 1.0
    if isinstance(model, MarkovChainModel):
        Pn = _matrix_power(model.transition, n)
        tv = float(0.5 * np.max(np.abs(Pn - model.stationary[None, :]).sum(axis=1)))
        # below _TV_NOISE the residual is rounding debris that stops shrinking
        # with n; snap to 0 so decay certificates downstream can terminate
        return 0.0 if tv < _TV_NOISE else tv
    if isinstance(model, (IIDModel, DoublingMapModel)):
        # doubling map: past and future bit algebras are independent; all
        # dependence is carried by the approximation rate instead
        return 0.0
    raise ConfigError(f"unknown model kind: {model!r}")


def _tuples(n_states: int, length: int) -> np.ndarray:
    if n_states**length > _ENUM_BUDGET:
        raise ConfigError(
            f"enumeration of {n_states}^{length} tuples exceeds the {_ENUM_BUDGET} cap"
        )
    grids = np.indices((n_states,) * length)
    return grids.reshape(length, -1).T  # (n_states**length, length)


def _window_probs(model: MarkovChainModel, tuples: np.ndarray) -> np.ndarray:
    """Stationary probability of each consecutive-window state tuple."""
    p = model.stationary[tuples[:, 0]].copy()
    for t in range(1, tuples.shape[1]):
        p *= model.transition[tuples[:, t - 1], tuples[:, t]]
    return p


def phi_bruteforce(model: MarkovChainModel, n: int, past_window: int, future_window: int) -> float:
    """Exact sup of |P(B|A) - P(B)| over unions of cylinder events.

    A ranges over unions of past-window atoms and B over unions of
    future-window atoms, the windows separated by gap ``n``.  The conditional
    P(B|A) is a convex combination of the single-atom conditionals, so the
    supremum over A is attained at an atom; for fixed A the supremum over
    unions B is the positive part of the signed atom measure.  Both are
    enumerated exactly here; nothing is sampled.
    """
    if not isinstance(model, MarkovChainModel):
        raise ConfigError("brute-force enumeration needs a finite-state chain")
    if n < 1 or past_window < 1 or future_window < 1:
        raise ConfigError("gap and windows must be >= 1")
    past = _tuples(model.n_states, past_window)
    future = _tuples(model.n_states, future_window)
    p_past = _window_probs(model, past)
    p_future = _window_probs(model, future)
    # n-step kernel assembled by repeated single-step products, kept local to
    # the oracle
    gap_kernel = reduce(np.matmul, [model.transition] * n)
    cond_start = gap_kernel[past[:, -1]][:, future[:, 0]]  # (n_past, n_future)
    internal = np.ones(future.shape[0])
    for t in range(1, future.shape[1]):
        internal *= model.transition[future[:, t - 1], future[:, t]]
    cond = cond_start * internal[None, :]
    live = p_past > 0
    diffs = cond[live] - p_future[None, :]
    return float(np.max(np.sum(np.where(diffs > 0, diffs, 0.0), axis=1)))


def alpha_coefficient(
    model: MarkovChainModel,
    n: int,
    past_window: int = 1,
    future_window: int = 1,
    unions: bool = False,
) -> float:
    """Strong-mixing coefficient over windowed cylinder events, by enumeration.

    The default supremum of |P(A and B) - P(A)P(B)| runs over single cylinder
    pairs.  With ``unions`` the past side additionally ranges over unions of
    atoms (feasible up to 2^16 subsets; the future side reduces to a
    positive-part sum).  Either variant is a lower bound for the unrestricted
    coefficient and obeys alpha(n) <= phi(n)/2.
    """
    if not isinstance(model, MarkovChainModel):
        raise ConfigError("enumeration needs a finite-state chain")
    if n < 1 or past_window < 1 or future_window < 1:
        raise ConfigError("gap and windows must be >= 1")
    past = _tuples(model.n_states, past_window)
    future = _tuples(model.n_states, future_window)
    p_past = _window_probs(model, past)
    p_future = _window_probs(model, future)
    gap_kernel = reduce(np.matmul, [model.transition] * n)
    cond_start = gap_kernel[past[:, -1]][:, future[:, 0]]
    internal = np.ones(future.shape[0])
    for t in range(1, future.shape[1]):
        internal *= model.transition[future[:, t - 1], future[:, t]]
    joint = p_past[:, None] * cond_start * internal[None, :]
    m = joint - p_past[:, None] * p_future[None, :]
    if not unions:
        val = float(np.max(np.abs(m)))
        return 0.0 if val < _TV_NOISE else val
    n_past = past.shape[0]
    if 2**n_past > 65536:
        raise ConfigError(f"union enumeration over 2^{n_past} past subsets exceeds the cap")
    subsets = np.arange(1, 2**n_past, dtype=np.uint32)
    members = (subsets[:, None] >> np.arange(n_past, dtype=np.uint32)[None, :]) & 1
    w = members.astype(float) @ m  # (n_subsets, n_future)
    # row sums vanish, so the best union of future atoms is the positive part
    val = float(np.max(np.sum(np.where(w > 0, w, 0.0), axis=1)))
    return 0.0 if val < _TV_NOISE else val


def beta_approx(model: ProcessModel, q: float, r: int) -> float:
    """Certified bound on the L^q distance between the process value and its
    conditional expectation given a radius-``r`` window of the driving noise.

    Chains and i.i.d. models are measurable at radius 0, so the rate is 0.
    For the doubling map, a radius-r window pins the first r bits of the
    shifted point, so the gap is at most the declared Holder oscillation over
    a cell of width 2^-r, and exactly 0 once r reaches the table level.
    """
    if q <= 0:
        raise ConfigError("norm index must be positive")
    if r < 0:
        raise ConfigError("radius must be nonnegative")
    if isinstance(model, (MarkovChainModel, IIDModel)):
        return 0.0
    if isinstance(model, DoublingMapModel):
        if r >= model.level:
            return 0.0
        return model.holder_const * 2.0 ** (-model.holder_exp * r)
    raise ConfigError(f"unknown model kind: {model!r}")


def beta_exact_doubling(model: DoublingMapModel, r: int) -> float:
    """Exact sup-norm conditional gap for the tabulated map (test oracle)."""
    if r >= model.level:
        return 0.0
    n_prefix = 1 << r
    blocks = model.table.reshape(n_prefix, -1, model.dim)
    means = blocks.mean(axis=1, keepdims=True)
    return float(np.max(np.linalg.norm(blocks - means, axis=2)))


# ---------------------------------------------------------------------------
# mixing profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixingProfile:
    """Bundled mixing data for a model: phi and alpha per gap, the certified
    approximation rate per (norm index, radius), and declared exponential
    decay parameters (rate a, factor d, exponent eta) when certified."""

    phi: Callable[[int], float]
    alpha: Callable[[int], float]
    beta: Callable[[float, int], float]
    decay: tuple[float, float, float] | None  # (a, d, eta) with phi(n)+... <= d exp(-a n^eta)
    doeblin: bool

    def phi_values(self, n_max: int) -> np.ndarray:
        return np.array([self.phi(n) for n in range(n_max + 1)])


def _dobrushin(P: np.ndarray) -> float:
    S = P.shape[0]
    worst = 0.0
    for i in range(S):
        for j in range(i + 1, S):
            worst = max(worst, 0.5 * float(np.abs(P[i] - P[j]).sum()))
    return worst


def mixing_profile(model: ProcessModel) -> MixingProfile:
    """Certified mixing profile for a model.

    Chains get exact phi per gap plus a geometric tail certificate from the
    Dobrushin contraction coefficient of P (or of a small power when P itself
    does not contract).  The doubling map carries all dependence in the
    approximation rate; i.i.d. models mix instantly.
    """
    if isinstance(model, MarkovChainModel):
        phi_fn = lambda n: phi_coefficient(model, n)
        decay = None
        doeblin = False
        for k in range(1, model.n_states * model.n_states + 1):
            beta_k = _dobrushin(_matrix_power(model.transition, k))
            if beta_k < 1.0 - 1e-12:
                doeblin = True
                if beta_k <= 0:
                    # exact independence after k steps; cover the first k gaps too
                    decay = (1.0, math.exp(k), 1.0)
                else:
                    # phi(n) <= beta_k**floor(n/k) <= (1/beta_k) exp(-(ln(1/beta_k)/k) n)
                    decay = (math.log(1.0 / beta_k) / k, 1.0 / beta_k, 1.0)
                break
        return MixingProfile(
            phi=phi_fn,
            alpha=lambda n: min(0.25, 0.5 * phi_fn(n)),
            beta=lambda q, r: 0.0,
            decay=decay,
            doeblin=doeblin,
        )
    if isinstance(model, IIDModel):
        phi_fn = lambda n: 1.0 if n == 0 else 0.0
        return MixingProfile(
            phi=phi_fn,
            alpha=lambda n: 0.25 if n == 0 else 0.0,
            beta=lambda q, r: 0.0,
            decay=(1.0, 1.0, 1.0),
            doeblin=True,
        )
    if isinstance(model, DoublingMapModel):
        phi_fn = lambda n: 1.0 if n == 0 else 0.0
        kappa = model.holder_exp
        return MixingProfile(
            phi=phi_fn,
            alpha=lambda n: 0.25 if n == 0 else 0.0,
            beta=lambda q, r: beta_approx(model, q, r),
            decay=(kappa * math.log(2.0), max(1.0, model.holder_const), 1.0),
            doeblin=True,
        )
    raise ConfigError(f"unknown model kind: {model!r}")


# ---------------------------------------------------------------------------
# conditional laws and decoupling
# ---------------------------------------------------------------------------


def conditional_law(
    model: MarkovChainModel,
    known: Sequence[tuple[int, int]],
    targets: Sequence[int],
) -> np.ndarray:
    """Joint law of the chain states at ``targets`` given observed states.

    ``known`` is a list of (index, state) pairs; ``targets`` must be sorted,
    positive, and disjoint from the known indices.  Returns a tensor of shape
    (S,)*len(targets) in target order.  Conditioning on a probability-zero
    observation is an error, not a silent NaN.
    """
    if not isinstance(model, MarkovChainModel):
        raise ConfigError("conditional laws are implemented for finite-state chains")
    tgt = list(targets)
    if not tgt or any(t < 1 for t in tgt) or sorted(set(tgt)) != tgt:
        raise ConfigError("targets must be sorted distinct positive indices")
    kn = sorted(known)
    kn_idx = [k for k, _ in kn]
    if len(set(kn_idx)) != len(kn_idx) or set(kn_idx) & set(tgt):
        raise ConfigError("known indices must be distinct and disjoint from targets")
    if any(k < 1 for k in kn_idx):
        raise ConfigError("indices must be positive")
    S = model.n_states
    if S ** len(tgt) > _ENUM_BUDGET:
        raise ConfigError("target tuple enumeration exceeds the budget")

    timeline = sorted([(k, ("known", s)) for k, s in kn] + [(t, ("target", i)) for i, t in enumerate(tgt)])
    grids = np.indices((S,) * len(tgt))  # (n_targets, S, S, ..., S)
    weight = np.ones((S,) * len(tgt))
    prev_index = None
    prev_state = None  # int or grid array
    for index, (tag, payload) in timeline:
        state = payload if tag == "known" else grids[payload]
        if prev_index is None:
            weight = weight * model.stationary[state]
        else:
            kernel = _matrix_power(model.transition, index - prev_index)
            weight = weight * kernel[prev_state, state]
        prev_index, prev_state = index, state
    total = weight.sum()
    if total <= 0:
        raise ConfigError("conditioning event has probability zero")
    return weight / total


@dataclass(frozen=True)
class DecouplingReport:
    discrepancy: float
    phi_bound: float
    alpha_bound: float | None
    sup_h: float
    gaps: tuple[int, ...]
    passed: bool


def decoupling_check(
    model: MarkovChainModel,
    blocks: Sequence[tuple[int, int]],
    grouping: Sequence[int],
    h: Callable[[np.ndarray], np.ndarray],
    product_factors: Sequence[Callable[[np.ndarray], np.ndarray]] | None = None,
) -> DecouplingReport:
    """Exact decoupling discrepancy for grouped blocks versus its mixing bound.

    ``blocks`` are disjoint time windows [m_i, n_i] in increasing order;
    ``grouping`` assigns each block to a group.  The check compares E h under
    the true joint law with E h under the law where groups are replaced by
    independent copies (each group keeps its internal dependence), both
    computed by exact enumeration.  The bound is 4 sup|h| times the sum of
    phi at the consecutive-block gaps; when ``product_factors`` gives h as a
    product of per-block functions, a strong-mixing product bound is reported
    as well (factor 8 for singleton groups, 16 otherwise).
    """
    if not isinstance(model, MarkovChainModel):
        raise ConfigError("decoupling enumeration needs a finite-state chain")
    blocks = [(int(a), int(b)) for a, b in blocks]
    if len(blocks) < 2 or len(grouping) != len(blocks):
        raise ConfigError("need >= 2 blocks and one group label per block")
    for (a, b), (a2, _) in zip(blocks, blocks[1:]):
        if a > b or b >= a2:
            raise ConfigError("blocks must be increasing and disjoint")
    if blocks[0][0] < 1:
        raise ConfigError("indices must be positive")

    indices = []
    owner = []
    for bi, (a, b) in enumerate(blocks):
        indices.extend(range(a, b + 1))
        owner.extend([bi] * (b - a + 1))
    T = len(indices)
    S = model.n_states
    states = _tuples(S, T)
    p_true = model.stationary[states[:, 0]].copy()
    for t in range(1, T):
        kernel = _matrix_power(model.transition, indices[t] - indices[t - 1])
        p_true *= kernel[states[:, t - 1], states[:, t]]

    shape = (S,) * T
    tensor = p_true.reshape(shape)
    p_prod = np.ones_like(p_true)
    for g in sorted(set(grouping)):
        axes_in = [t for t in range(T) if grouping[owner[t]] == g]
        axes_out = tuple(t for t in range(T) if grouping[owner[t]] != g)
        marg = tensor.sum(axis=axes_out) if axes_out else tensor
        flat = np.ravel_multi_index([states[:, t] for t in axes_in], (S,) * len(axes_in))
        p_prod = p_prod * marg.reshape(-1)[flat]

    values = model.values[states]  # (n_tuples, T, dim)
    hv = np.asarray(h(values), dtype=float)
    if hv.shape != (states.shape[0],):
        raise ConfigError("h must map (n, T, dim) values to (n,) reals")
    sup_h = float(np.max(np.abs(hv)))
    disc = float(abs((p_true - p_prod) @ hv))
    gaps = tuple(a2 - b for (_, b), (a2, _) in zip(blocks, blocks[1:]))
    phi_bound = 4.0 * sup_h * sum(phi_coefficient(model, g) for g in gaps)

    alpha_bound = None
    if product_factors is not None:
        if len(product_factors) != len(blocks):
            raise ConfigError("need one product factor per block")
        sup_prod = 1.0
        for bi, (a, b) in enumerate(blocks):
            block_states = _tuples(S, b - a + 1)
            vals = model.values[block_states]
            fv = np.asarray(product_factors[bi](vals), dtype=float)
            sup_prod *= float(np.max(np.abs(fv)))
        singleton = len(set(grouping)) == len(blocks)
        const = 8.0 if singleton else 16.0
        alpha_bound = const * sup_prod * sum(
            alpha_coefficient(model, g, unions=(S <= 12)) for g in gaps
        )

    return DecouplingReport(
        discrepancy=disc,
        phi_bound=phi_bound,
        alpha_bound=alpha_bound,
        sup_h=sup_h,
        gaps=gaps,
        passed=disc <= phi_bound + 1e-12,
    )


@dataclass(frozen=True)
class FiberConditionalReport:
    sup_gap: float
    c_const: float
    phi_windowed: float
    bound: float
    passed: bool


def fiber_conditional_check(
    model: MarkovChainModel,
    gap: int,
    past_window: int,
    future_window: int,
    x_grid: np.ndarray,
    f_table: np.ndarray,
    holder_exp: float = 1.0,
) -> FiberConditionalReport:
    """Conditional expectation of a random function, fiber by fiber.

    ``f_table[i, b]`` is f(x_i, omega) for future-window atom b.  The check
    compares sup over x and positive-probability past atoms of
    |E[f(x, .) | past] - E f(x, .)| against 2 C phi(G, H), where C bounds both
    |f| and its Holder quotient in x (computed from the table) and phi(G, H)
    is the exact windowed coefficient from the brute-force oracle.
    """
    x = np.asarray(x_grid, dtype=float)
    table = np.asarray(f_table, dtype=float)
    future = _tuples(model.n_states, future_window)
    if table.shape != (x.size, future.shape[0]):
        raise ConfigError("f table must be (n_x, S**future_window)")
    p_future = _window_probs(model, future)
    gap_kernel = reduce(np.matmul, [model.transition] * gap)
    past = _tuples(model.n_states, past_window)
    p_past = _window_probs(model, past)
    cond_start = gap_kernel[past[:, -1]][:, future[:, 0]]
    internal = np.ones(future.shape[0])
    for t in range(1, future.shape[1]):
        internal *= model.transition[future[:, t - 1], future[:, t]]
    cond = cond_start * internal[None, :]  # (n_past, n_future)

    uncond = table @ p_future  # (n_x,)
    cond_exp = table @ cond[p_past > 0].T  # (n_x, n_live)
    sup_gap = float(np.max(np.abs(cond_exp - uncond[:, None])))

    c_const = float(np.max(np.abs(table)))
    if x.size > 1:
        dx = np.abs(x[:, None] - x[None, :])
        df = np.max(np.abs(table[:, None, :] - table[None, :, :]), axis=2)
        off = ~np.eye(x.size, dtype=bool)
        c_const = max(c_const, float(np.max(df[off] / dx[off] ** holder_exp)))

    phi_gh = phi_bruteforce(model, gap, past_window, future_window)
    bound = 2.0 * c_const * phi_gh
    return FiberConditionalReport(
        sup_gap=sup_gap,
        c_const=c_const,
        phi_windowed=phi_gh,
        bound=bound,
        passed=sup_gap <= bound + 1e-12,
    )
