"""Martingale approximation of nonconventional sums over finite-state chains.

With linear index maps the centered sum splits into per-level streams
Y_{i,m} = F_i(xi_{m/i}, xi_{2m/i}, ..., xi_m) living at times m divisible by
i, where F_i is the telescoping component whose last-coordinate marginal mean
vanishes.  Adding the predicted future R_{i,m} = sum over the next `horizon`
times s of E[Y_{i,s} | path up to m] and differencing gives increments
W_{i,m} = Y_{i,m} + R_{i,m} - R_{i,m-1} whose conditional mean given the past
is zero up to the certified truncation error, so the running sum M over
increments with m <= i*N is a martingale approximating S_N.

Every conditional expectation is an exact chain computation.  A term Y_{i,s}
has arguments at positions j*(s/i); the positions at or before the
conditioning time are read off the path, the rest are integrated out with
transition powers.  Terms reduce to lookups in small precomputed tensors, so
path batches evaluate vectorized.

The truncation certificate: |E[Y_{i,s} | path to m]| <= 2 sup|F_i| phi(g)
with g = s - max(m, (i-1)s/i), because the conditional expectation given
everything before the last argument is a plain mixing bound against the
vanishing marginal mean.  Summing the dropped terms s > m + horizon and
splitting the min over the two gap shapes bounds the tail by
2 sup|F_i| (phi_tail(floor(horizon/i)) + phi_tail(horizon)), uniformly in m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from nonconv.errors import ConfigError
from nonconv.indexing import IndexFamily
from nonconv.observables import CenteredObservable, batch_sums
from nonconv.processes import (
    DoublingMapModel,
    IIDModel,
    MarkovChainModel,
    MixingProfile,
    ProcessModel,
    beta_approx,
    doubling_to_markov,
    mixing_profile,
    sample_state_paths,
)
from nonconv.rng import substream_rng

_BOOT_PURPOSE = 7  # substream id for bootstrap resampling


# ---------------------------------------------------------------------------
# summed mixing coefficients
# ---------------------------------------------------------------------------


def varphi_sum(mixing: MixingProfile, cutoff: int = 64) -> tuple[float, float]:
    """Partial sum of phi over gaps 0..cutoff plus a certified tail bound.

    The gap-0 convention phi(0) = 1 makes the series start at 1.  The tail
    uses the declared decay phi(n) <= d exp(-a n^eta): exact geometric series
    at eta = 1, otherwise d exp(-(a/2)(c+1)^eta) (1 + Gamma(1+1/eta)(2/a)^(1/eta))
    (split the exponent in half, compare the remaining sum to the full
    integral).  When phi(cutoff+1) is exactly zero the tail is zero by
    monotonicity.  Raises when no certificate is declared and the tail has
    not vanished.
    """
    if cutoff < 0:
        raise ConfigError("cutoff must be nonnegative")
    partial = math.fsum(mixing.phi(n) for n in range(cutoff + 1))
    if mixing.phi(cutoff + 1) == 0.0:
        return partial, 0.0
    if mixing.decay is None:
        raise ConfigError("no decay certificate to bound the phi tail")
    a, d, eta = mixing.decay
    if a <= 0 or d <= 0 or eta <= 0:
        raise ConfigError("decay parameters must be positive")
    c1 = cutoff + 1
    if eta == 1.0:
        tail = d * math.exp(-a * c1) / (-math.expm1(-a))
    else:
        tail = d * math.exp(-(a / 2.0) * c1**eta) * (
            1.0 + math.gamma(1.0 + 1.0 / eta) * (2.0 / a) ** (1.0 / eta)
        )
    return partial, tail


def _phi_tail(mixing: MixingProfile, cutoff: int) -> float:
    return varphi_sum(mixing, cutoff)[1]


# ---------------------------------------------------------------------------
# decomposition object
# ---------------------------------------------------------------------------


def _as_chain(model: ProcessModel) -> tuple[MarkovChainModel, str]:
    if isinstance(model, MarkovChainModel):
        return model, "finite-markov"
    if isinstance(model, IIDModel):
        n_atoms = model.law.atoms.shape[0]
        return (
            MarkovChainModel(
                transition=np.tile(model.law.probs, (n_atoms, 1)),
                values=model.law.atoms.copy(),
                stationary=model.law.probs.copy(),
            ),
            "iid",
        )
    if isinstance(model, DoublingMapModel):
        return doubling_to_markov(model), "doubling-map"
    raise ConfigError(f"unknown model kind: {model!r}")


@dataclass(eq=False)
class MartingaleDecomposition:
    """Precomputed tables for the increment construction on one instance.

    delta1_prime / delta2_prime are the configured-constant difference and
    gap bounds b*K*(phi_sum + r + 1) and b*K*N*beta + delta1_prime; the
    unscaled delta1_plain / delta2_plain drop the b factor for use in the
    exponential-moment display.
    """

    chain: MarkovChainModel
    source_kind: str
    centered: CenteredObservable
    n_terms: int
    arity: int
    smoothing_radius: int
    horizon: int
    tail_error: float
    phi_sum_value: float
    phi_sum_tail: float
    beta_term: float
    component_sups: tuple[float, ...]
    b_factor: float
    mixing: MixingProfile = field(repr=False)
    _f_tables: dict = field(default_factory=dict, repr=False)
    _f_centered: np.ndarray | None = field(default=None, repr=False)
    _u_cache: dict = field(default_factory=dict, repr=False)
    _powers: dict = field(default_factory=dict, repr=False)

    @property
    def phi_sum(self) -> float:
        return self.phi_sum_value + self.phi_sum_tail

    @property
    def bound_const(self) -> float:
        return self.centered.base.bound_const

    @property
    def delta1_plain(self) -> float:
        return self.bound_const * (self.phi_sum + self.smoothing_radius + 1.0)

    @property
    def delta2_plain(self) -> float:
        return self.bound_const * self.n_terms * self.beta_term + self.delta1_plain

    @property
    def delta1_prime(self) -> float:
        return self.b_factor * self.delta1_plain

    @property
    def delta2_prime(self) -> float:
        return self.b_factor * self.delta2_plain

    def w_sup_bound(self, b1: float) -> float:
        """Configured-constant bound on a whole-step increment |W_m|."""
        return self.arity * b1 * self.bound_const * (self.phi_sum + self.smoothing_radius + 1.0)

    def r_sup_bound(self) -> float:
        """Configured-constant bound on |R_{i,m}| (plus the certified tail)."""
        return 2.0 * self.b_factor * self.bound_const * (
            self.phi_sum + self.smoothing_radius + 1.0
        )

    # -- internal tables ---------------------------------------------------

    def _pow(self, g: int) -> np.ndarray:
        got = self._powers.get(g)
        if got is None:
            got = np.linalg.matrix_power(self.chain.transition, g)
            self._powers[g] = got
        return got

    def _f_table(self, i: int) -> np.ndarray:
        got = self._f_tables.get(i)
        if got is None:
            S = self.chain.n_states
            grids = np.meshgrid(*([np.arange(S)] * i), indexing="ij")
            pts = self.chain.values[np.stack([g.ravel() for g in grids], axis=1)]
            got = self.centered.components[i - 1](pts).reshape((S,) * i)
            self._f_tables[i] = got
        return got

    def _full_table(self) -> np.ndarray:
        if self._f_centered is None:
            S = self.chain.n_states
            L = self.arity
            grids = np.meshgrid(*([np.arange(S)] * L), indexing="ij")
            pts = self.chain.values[np.stack([g.ravel() for g in grids], axis=1)]
            self._f_centered = self.centered.centered(pts).reshape((S,) * L)
        return self._f_centered

    def _u_for(self, i: int, nprime: int) -> list[np.ndarray]:
        """u[j0] integrates arguments j0+1..i of F_i forward from the value at
        position j0*nprime; u[j0] has j0 axes (known args, then that value)."""
        key = (i, nprime)
        got = self._u_cache.get(key)
        if got is None:
            Pn = self._pow(nprime)
            tensors: list[np.ndarray | None] = [None] * (i + 1)
            T = self._f_table(i)
            tensors[i] = T
            for j0 in range(i - 1, 0, -1):
                T = np.einsum("...ab,ab->...a", T, Pn)
                tensors[j0] = T
            got = tensors
            self._u_cache[key] = got
        return got

    def needed_positions(self, i: int, s: int, m: int) -> list[int]:
        """Path positions a conditional term E[Y_{i,s} | path to m] reads."""
        nprime = s // i
        j0 = m // nprime + 1
        if j0 > i:
            return [j * nprime for j in range(1, i + 1)]
        out = [j * nprime for j in range(1, j0)]
        if m > 0:
            out.append(m)
        return out

    def term_values(self, i: int, s: int, m: int, getcol: Callable[[int], np.ndarray]):
        """Batch values of E[Y_{i,s} | path to m] (= Y_{i,s} itself once s <= m).

        ``getcol(p)`` returns the batch of states at path position p.  At
        m = 0 the conditioning is trivial and a scalar (the unconditional
        mean) is returned.
        """
        nprime = s // i
        j0 = m // nprime + 1
        if j0 > i:
            cols = tuple(getcol(j * nprime) for j in range(1, i + 1))
            return self._f_table(i)[cols]
        u = self._u_for(i, nprime)[j0]
        if m == 0:
            # j0 = 1 here; the first argument's law is the stationary marginal
            return float(self.chain.stationary @ u)
        rows = self._pow(j0 * nprime - m)[getcol(m)]
        if j0 == 1:
            return rows @ u
        known = tuple(getcol(j * nprime) for j in range(1, j0))
        return np.einsum("bs,bs->b", rows, u[known])

    def r_times(self, i: int, m: int) -> range:
        """Times of the retained future terms of R_{i,m}."""
        first = m + 1 + (-(m + 1)) % i
        return range(first, m + self.horizon + 1, i)

    def r_start(self, i: int) -> float:
        """R_{i,0}: the trivially-conditioned sum of unconditional means."""
        return math.fsum(self.term_values(i, s, 0, lambda p: None) for s in self.r_times(i, 0))


def build_decomposition(
    model: ProcessModel,
    centered: CenteredObservable,
    family: IndexFamily,
    n_terms: int,
    smoothing_radius: int = 0,
    horizon: int | None = None,
    b_factor: float = 1.0,
    tail_target: float = 1e-8,
    horizon_cap: int = 4096,
) -> MartingaleDecomposition:
    """Assemble the increment machinery for one (model, observable, N) triple.

    Only linear index families are supported (the per-level streams need the
    arithmetic-progression structure).  The doubling map is converted to its
    exact bit-window chain; its smoothing radius must reach the table level,
    beyond which the smoothed summands coincide with the exact ones and the
    approximation-rate term vanishes.  The horizon is doubled until the
    certified truncation tail drops below ``tail_target`` unless fixed
    explicitly.
    """
    if family.kind != "linear" or family.arity != centered.arity:
        raise ConfigError("martingale construction needs the linear family of matching arity")
    if n_terms < 1 or smoothing_radius < 0:
        raise ConfigError("need n_terms >= 1 and smoothing_radius >= 0")
    if isinstance(model, DoublingMapModel) and smoothing_radius < model.level:
        raise ConfigError(
            "smoothing radius below the doubling table level is not representable; "
            "use radius >= level so the smoothed summands are exact"
        )
    chain, source_kind = _as_chain(model)
    if chain.n_states ** centered.arity > 1_000_000:
        raise ConfigError("state space too large for the conditional tables")
    mixing = mixing_profile(chain)
    sups = centered.component_sups
    sup_max = max(sups) if sups else 0.0

    if horizon is None:
        H = 8
        while True:
            tail = max(
                2.0 * sups[i - 1] * (_phi_tail(mixing, H // i) + _phi_tail(mixing, H))
                for i in range(1, centered.arity + 1)
            ) if sup_max > 0 else 0.0
            if tail <= tail_target or H >= horizon_cap:
                break
            H *= 2
        if tail > tail_target:
            raise ConfigError(
                f"truncation tail {tail:.3e} above target {tail_target:.1e} at horizon cap {horizon_cap}"
            )
    else:
        H = int(horizon)
        if H < 1:
            raise ConfigError("horizon must be positive")
        tail = max(
            2.0 * sups[i - 1] * (_phi_tail(mixing, H // i) + _phi_tail(mixing, H))
            for i in range(1, centered.arity + 1)
        ) if sup_max > 0 else 0.0

    value, tail_sum = varphi_sum(mixing, cutoff=64)
    beta_term = beta_approx(model, math.inf, smoothing_radius) ** centered.base.holder_exp
    return MartingaleDecomposition(
        chain=chain,
        source_kind=source_kind,
        centered=centered,
        n_terms=n_terms,
        arity=centered.arity,
        smoothing_radius=smoothing_radius,
        horizon=H,
        tail_error=float(tail),
        phi_sum_value=value,
        phi_sum_tail=tail_sum,
        beta_term=float(beta_term),
        component_sups=tuple(sups),
        b_factor=float(b_factor),
        mixing=mixing,
    )


# ---------------------------------------------------------------------------
# path evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathEvaluation:
    """Per-replicate sums, increments, and boundary predictions."""

    master_seed: int
    n_replicates: int
    sums: np.ndarray  # (B,) S_N
    martingale: np.ndarray  # (B,) terminal M
    increments: np.ndarray  # (B, arity*N) whole-step W values
    r_start: np.ndarray  # (arity,) deterministic R_{i,0}
    r_end: np.ndarray  # (B, arity) R_{i, i*N}
    max_abs_r: float

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(self.sums - self.martingale)

    @property
    def step_sups(self) -> np.ndarray:
        """Empirical per-step sup |W_m| over the replicate batch."""
        return np.max(np.abs(self.increments), axis=0)


def evaluate_paths(
    decomp: MartingaleDecomposition,
    master_seed: int,
    n_replicates: int,
    first_replicate: int = 0,
) -> PathEvaluation:
    """Evaluate S_N, all increments, and the terminal martingale on a batch.

    Replicates use the same counter-based streams as plain path sampling, so
    the sums agree with the sampling engine's for identical seeds.
    """
    L, N = decomp.arity, decomp.n_terms
    LN = L * N
    states = sample_state_paths(
        decomp.chain, np.arange(1, LN + 1), master_seed, n_replicates, first_replicate
    )
    getcol = lambda p: states[:, p - 1]
    B = n_replicates

    full = decomp._full_table()
    sums = np.zeros(B)
    for n in range(1, N + 1):
        cols = tuple(states[:, i * n - 1] for i in range(1, L + 1))
        sums += full[cols]

    increments = np.zeros((B, LN))
    r_start = np.array([decomp.r_start(i) for i in range(1, L + 1)])
    r_prev = [np.full(B, r_start[i - 1]) for i in range(1, L + 1)]
    r_end = np.zeros((B, L))
    max_abs_r = float(np.max(np.abs(r_start))) if L else 0.0
    for m in range(1, LN + 1):
        for i in range(1, L + 1):
            if m > i * N:
                continue
            r_m = np.zeros(B)
            for s in decomp.r_times(i, m):
                r_m += decomp.term_values(i, s, m, getcol)
            w = r_m - r_prev[i - 1]
            if m % i == 0:
                w = w + decomp.term_values(i, m, m, getcol)
            increments[:, m - 1] += w
            r_prev[i - 1] = r_m
            max_abs_r = max(max_abs_r, float(np.max(np.abs(r_m))))
            if m == i * N:
                r_end[:, i - 1] = r_m
    martingale = increments.sum(axis=1)
    return PathEvaluation(
        master_seed=master_seed,
        n_replicates=B,
        sums=sums,
        martingale=martingale,
        increments=increments,
        r_start=r_start,
        r_end=r_end,
        max_abs_r=max_abs_r,
    )


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleCheck:
    mode: str
    max_abs: float
    allowance: float
    tol: float
    worst_time: int
    worst_level: int
    n_conditions: int
    passed: bool


def check_martingale(
    decomp: MartingaleDecomposition,
    mode: str = "exhaustive",
    tol: float = 1e-8,
    master_seed: int = 0,
    n_replicates: int = 256,
    condition_budget: int = 1_000_000,
) -> MartingaleCheck:
    """Verify E[W_{i,m} | path to m-1] = 0 up to the certified truncation.

    Exhaustive mode enumerates every assignment of states to the positions an
    increment actually reads (the kernel identity is pointwise, so this is
    the full conditional-mean check); sampled mode evaluates the same
    conditional means along simulated pasts.  The report carries the worst
    offender and the allowance tol + tail_error it is compared against.
    """
    if mode not in ("exhaustive", "sampled"):
        raise ConfigError("mode must be 'exhaustive' or 'sampled'")
    L, N, S = decomp.arity, decomp.n_terms, decomp.chain.n_states
    LN = L * N
    P = decomp.chain.transition
    sampled_states = None
    if mode == "sampled":
        sampled_states = sample_state_paths(
            decomp.chain, np.arange(1, LN + 1), master_seed, n_replicates
        )

    worst = 0.0
    worst_at = (0, 0)
    n_conditions = 0
    for m in range(1, LN + 1):
        for i in range(1, L + 1):
            if m > i * N:
                continue
            # positions the increment reads strictly before the step time
            past: set[int] = set()
            terms_m = list(decomp.r_times(i, m))
            terms_prev = list(decomp.r_times(i, m - 1))
            if m % i == 0:
                past.update(p for p in decomp.needed_positions(i, m, m) if p < m)
            for s in terms_m:
                past.update(p for p in decomp.needed_positions(i, s, m) if p < m)
            for s in terms_prev:
                past.update(decomp.needed_positions(i, s, m - 1))
            if m > 1:
                past.add(m - 1)
            pos = sorted(past)

            if mode == "exhaustive":
                n_prof = S ** len(pos)
                if n_prof * S > condition_budget:
                    raise ConfigError(
                        f"exhaustive check needs {n_prof * S} conditions at step {m}, over budget"
                    )
                if n_prof == 1:
                    grid = np.zeros((1, 0), dtype=np.int64)
                else:
                    mesh = np.meshgrid(*([np.arange(S)] * len(pos)), indexing="ij")
                    grid = np.stack([g.ravel() for g in mesh], axis=1)
                B0 = grid.shape[0]
                col_of = {p: grid[:, t] for t, p in enumerate(pos)}
            else:
                B0 = n_replicates
                col_of = {p: sampled_states[:, p - 1] for p in pos}
            n_conditions += B0

            # batch = (profile, step-state) pairs; the step state integrates out
            def getcol(p, _col_of=col_of, _m=m):
                if p == _m:
                    return np.tile(np.arange(S), B0)
                return np.repeat(_col_of[p], S)

            val = np.zeros(B0 * S)
            if m % i == 0:
                val += decomp.term_values(i, m, m, getcol)
            for s in terms_m:
                val += decomp.term_values(i, s, m, getcol)
            val = val.reshape(B0, S)
            if m == 1:
                weights = np.tile(decomp.chain.stationary, (B0, 1))
            else:
                weights = P[col_of[m - 1]]
            cond = np.einsum("bs,bs->b", weights, val)

            prev = np.zeros(B0)
            for s in terms_prev:
                got = decomp.term_values(i, s, m - 1, lambda p: col_of[p])
                prev += got
            offend = float(np.max(np.abs(cond - prev))) if B0 else 0.0
            if offend > worst:
                worst = offend
                worst_at = (m, i)

    allowance = decomp.tail_error
    return MartingaleCheck(
        mode=mode,
        max_abs=worst,
        allowance=allowance,
        tol=tol,
        worst_time=worst_at[0],
        worst_level=worst_at[1],
        n_conditions=n_conditions,
        passed=worst <= tol + allowance,
    )


@dataclass(frozen=True)
class SupGapReport:
    gap_max: float
    delta2_prime: float
    n_replicates: int
    passed: bool


def sup_gap(
    decomp: MartingaleDecomposition,
    master_seed: int = 0,
    n_replicates: int = 256,
    evaluation: PathEvaluation | None = None,
) -> SupGapReport:
    """Empirical max |S_N - M| over a replicate batch against the gap bound."""
    if evaluation is None:
        evaluation = evaluate_paths(decomp, master_seed, n_replicates)
    gap_max = float(np.max(evaluation.gaps))
    return SupGapReport(
        gap_max=gap_max,
        delta2_prime=decomp.delta2_prime,
        n_replicates=evaluation.n_replicates,
        passed=gap_max <= decomp.delta2_prime,
    )


@dataclass(frozen=True)
class TelescopingReport:
    max_error: float
    tol: float
    passed: bool


def telescoping_check(evaluation: PathEvaluation, tol: float = 1e-9) -> TelescopingReport:
    """The summed increments must reproduce S_N minus the boundary predictions.

    Collapsing the increment sum stream by stream leaves the per-stream Y
    total plus R at the final stream time minus R at time zero, so
    S_N - M = sum_i (R_{i,0} - R_{i,i*N}) exactly; this checks the
    implementation only for accumulated rounding, scaled by the batch max.
    """
    lhs = evaluation.sums - evaluation.martingale
    rhs = (evaluation.r_start[None, :] - evaluation.r_end).sum(axis=1)
    scale = max(1.0, float(np.max(np.abs(evaluation.sums))))
    err = float(np.max(np.abs(lhs - rhs))) / scale
    return TelescopingReport(max_error=err, tol=tol, passed=err <= tol)


# ---------------------------------------------------------------------------
# exponential-moment checks
# ---------------------------------------------------------------------------


def _bootstrap_upper(terms: np.ndarray, rng: np.random.Generator, n_boot: int, q: float) -> float:
    """Upper quantile of bootstrap means, chunked to keep index blocks small."""
    n = terms.size
    means = np.empty(n_boot)
    done = 0
    while done < n_boot:
        chunk = min(64, n_boot - done)
        idx = rng.integers(0, n, size=(chunk, n))
        means[done : done + chunk] = terms[idx].mean(axis=1)
        done += chunk
    return float(np.quantile(means, q))


@dataclass(frozen=True)
class AzumaRow:
    lam: float
    mgf_m: float
    mgf_m_upper: float
    rhs_m: float
    mgf_s: float
    mgf_s_upper: float
    rhs_s: float
    verdict: str  # pass | fail | inconclusive


@dataclass(frozen=True)
class AzumaReport:
    rows: tuple[AzumaRow, ...]
    sum_w_sq: float
    b_constant: float
    passed: bool

    def row(self, lam: float) -> AzumaRow:
        for r in self.rows:
            if abs(r.lam - lam) < 1e-15:
                return r
        raise KeyError(lam)


def azuma_mgf_check(
    decomp: MartingaleDecomposition,
    lambdas,
    master_seed: int = 0,
    n_replicates_m: int = 2000,
    n_replicates_s: int | None = None,
    b_constant: float | None = None,
    delta1: float | None = None,
    delta2: float | None = None,
    n_boot: int = 999,
    source_model: ProcessModel | None = None,
    family: IndexFamily | None = None,
) -> AzumaReport:
    """Exponential-moment checks for the martingale and for the raw sum.

    The martingale side compares the empirical moment generating function of
    the terminal M against exp(lam^2 * sum_m sup|W_m|^2) with empirical
    per-step sups.  The sum side compares the MGF of S_N against
    exp(b lam^2 N arity delta1 + b lam delta2).  Upper confidence ends come
    from a seeded bootstrap; a row whose largest term carries over 20% of the
    MGF sum is reported inconclusive rather than failed.
    """
    if b_constant is None:
        b_constant = decomp.b_factor
    if delta1 is None:
        delta1 = decomp.delta1_plain
    if delta2 is None:
        delta2 = decomp.delta2_plain
    evaluation = evaluate_paths(decomp, master_seed, n_replicates_m)
    sum_w_sq = float(np.sum(evaluation.step_sups**2))

    if n_replicates_s is None or n_replicates_s == n_replicates_m:
        s_samples = evaluation.sums
    elif source_model is not None and family is not None:
        s_samples = batch_sums(
            source_model, decomp.centered, family, decomp.n_terms, master_seed, n_replicates_s
        )
    else:
        ev2 = evaluate_paths(decomp, master_seed, n_replicates_s)
        s_samples = ev2.sums

    rng = substream_rng(master_seed, _BOOT_PURPOSE)
    rows = []
    all_pass = True
    N, L = decomp.n_terms, decomp.arity
    for lam in lambdas:
        terms_m = np.exp(lam * evaluation.martingale)
        terms_s = np.exp(lam * s_samples)
        mgf_m = float(terms_m.mean())
        mgf_s = float(terms_s.mean())
        dominated = (
            float(terms_m.max()) > 0.2 * float(terms_m.sum())
            or float(terms_s.max()) > 0.2 * float(terms_s.sum())
        ) and lam != 0.0
        upper_m = _bootstrap_upper(terms_m, rng, n_boot, 0.99)
        upper_s = _bootstrap_upper(terms_s, rng, n_boot, 0.99)
        rhs_m = math.exp(lam * lam * sum_w_sq)
        rhs_s = math.exp(
            b_constant * lam * lam * N * L * delta1 + b_constant * abs(lam) * delta2
        )
        if dominated:
            verdict = "inconclusive"
        elif upper_m <= rhs_m and upper_s <= rhs_s:
            verdict = "pass"
        else:
            verdict = "fail"
            all_pass = False
        rows.append(
            AzumaRow(
                lam=float(lam),
                mgf_m=mgf_m,
                mgf_m_upper=upper_m,
                rhs_m=rhs_m,
                mgf_s=mgf_s,
                mgf_s_upper=upper_s,
                rhs_s=rhs_s,
                verdict=verdict,
            )
        )
    return AzumaReport(
        rows=tuple(rows), sum_w_sq=sum_w_sq, b_constant=float(b_constant), passed=all_pass
    )
