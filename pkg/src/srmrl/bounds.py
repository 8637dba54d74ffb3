"""Probabilistic lower bounds on true return.

Stacks four ingredients into one bound report: the stitched return estimate,
its Lipschitz discrepancy penalty, Hoeffding concentration terms, and a
capacity penalty Omega built from the empirical Rademacher complexity of the
policy class (estimated on the stitched episode returns, normalized to
[-1, 0], then rescaled by the return range).

    lower_bound = v_mfmc - d - 2 * hoeffding - omega

Each ingredient consumes one or two delta-events; the report counts them in
confidence_multiplier so the total failure probability reads off as
confidence_multiplier * delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from srmrl.core import CapacityError, ReturnRange, TransitionDataset
from srmrl.mfmc import DistanceWeights, LipschitzConstants, MfmcResult, mfmc_evaluate


@dataclass(frozen=True)
class ConfidenceParams:
    """Confidence level and sign-vector sampling for the Rademacher estimator.

    exact_enumeration None means auto: enumerate all sign vectors whenever
    that is no more work than sigma_draws Monte Carlo draws.
    """

    delta: float
    sigma_draws: int = 100
    exact_enumeration: bool | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.sigma_draws < 1:
            raise ValueError("sigma_draws must be >= 1")

    def use_exact(self, n: int) -> bool:
        if self.exact_enumeration is not None:
            return self.exact_enumeration
        return 2**n <= max(self.sigma_draws, 2)


def hoeffding_penalty(rng: ReturnRange, n: int, delta: float) -> float:
    """Concentration half-width (B - A) * sqrt(-ln(delta) / (2 n))."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return rng.width * math.sqrt(-math.log(delta) / (2.0 * n))


def exp_abs_sign_sum(n: int) -> float:
    """E|sigma_1 + ... + sigma_n| for independent uniform signs, closed form."""
    return n * 2.0 ** (1 - n) * math.comb(n - 1, (n - 1) // 2)


def _enumerate_signs(n: int) -> Iterator[np.ndarray]:
    # |sum sigma_n f| is invariant under sigma -> -sigma, so enumerating the
    # half-space with the first sign fixed at +1 averages identically to the
    # full 2^n enumeration.
    for bits in range(2 ** (n - 1)):
        sigma = np.ones(n)
        for j in range(n - 1):
            if (bits >> j) & 1:
                sigma[j + 1] = -1.0
        yield sigma


def _draw_signs(n: int, draws: int, rng_seed: int) -> Iterator[np.ndarray]:
    # one derived stream per draw index; draws are schedule independent
    for i in range(draws):
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([rng_seed, i])))
        yield gen.integers(0, 2, n) * 2.0 - 1.0


def rademacher_estimate_generic(
    class_sup: Callable[[np.ndarray], float],
    n: int,
    conf: ConfidenceParams,
    rng_seed: int = 0,
) -> float:
    """Empirical Rademacher complexity E_sigma[(2/n) sup_f |sum sigma_i f(x_i)|].

    class_sup(sigma) must return sup_f |sum_i sigma_i f(x_i)| for the class.
    Exact enumeration averages all 2^n sign vectors (n <= 20); otherwise
    sigma_draws Monte Carlo vectors are drawn from rng_seed.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if conf.use_exact(n):
        if n > 20:
            raise CapacityError(f"exact enumeration over 2^{n} sign vectors refused (n > 20)")
        vals = [class_sup(sigma) for sigma in _enumerate_signs(n)]
    else:
        vals = [class_sup(sigma) for sigma in _draw_signs(n, conf.sigma_draws, rng_seed)]
    return max(0.0, (2.0 / n) * float(np.mean(vals)))


def omega_penalty(rademacher: float, n: int, delta: float) -> float:
    """Capacity penalty in normalized units: R + sqrt(-8 ln delta / n) + sqrt(-8 ln(2 delta) / n).

    The first sqrt inflates the estimate to the population Rademacher
    complexity, the second is the uniform-bound confidence term; together
    they consume two delta-events.  Needs delta < 1/2 so ln(2 delta) < 0.
    """
    if rademacher < 0:
        raise ValueError("rademacher estimate must be nonnegative")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"omega penalty needs delta in (0, 0.5), got {delta}")
    return rademacher + math.sqrt(-8.0 * math.log(delta) / n) + math.sqrt(-8.0 * math.log(2.0 * delta) / n)


@dataclass(frozen=True)
class EvalContext:
    """Everything needed to evaluate policies against a dataset.

    Bundles the domain surface (reward, start state, return range), the
    stitching parameters, and the sup-optimizer callback used inside the
    Rademacher estimator.  lipschitz.l_pi is the fallback policy constant for
    bare callables; policies exposing .lipschitz() get their own.
    """

    reward_fn: Callable[[np.ndarray], np.ndarray]
    return_range: ReturnRange
    start_state: np.ndarray
    weights: DistanceWeights
    lipschitz: LipschitzConstants
    n_tilde: int
    hoeffding_n_mode: str = "artificial"   # "artificial" -> n_tilde, "episodes" -> N
    estimator: str = "direct"              # "direct" | "surrogate"
    sup_optimizer: object | None = None

    def __post_init__(self):
        if self.hoeffding_n_mode not in ("artificial", "episodes"):
            raise ValueError(f"unknown hoeffding_n_mode {self.hoeffding_n_mode!r}")
        if self.estimator not in ("direct", "surrogate"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.n_tilde < 1:
            raise ValueError("n_tilde must be >= 1")
        object.__setattr__(self, "start_state", np.asarray(self.start_state, dtype=np.float64))

    def lipschitz_for(self, pi) -> LipschitzConstants:
        lip = getattr(pi, "lipschitz", None)
        if lip is not None:
            return self.lipschitz.with_policy(float(lip()))
        return self.lipschitz

    def conc_n(self, data: TransitionDataset) -> int:
        return self.n_tilde if self.hoeffding_n_mode == "artificial" else data.n_episodes

    def evaluate(self, pi, data: TransitionDataset, keep_episodes: bool = False) -> MfmcResult:
        return mfmc_evaluate(
            pi, data, self.n_tilde, self.weights, self.lipschitz_for(pi),
            self.reward_fn, start_state=self.start_state, keep_episodes=keep_episodes,
        )

    def normalize_batch(self, returns: np.ndarray) -> np.ndarray:
        """Map returns onto [-1, 0].

        Stitched pseudo-episodes can step slightly outside the declared range
        (they chain states no realized episode visits), so this clips instead
        of raising; the strict scalar contract lives in core.normalize_returns.
        """
        z = (np.asarray(returns, dtype=np.float64) - self.return_range.hi) / self.return_range.width
        return np.clip(z, -1.0, 0.0)


def rademacher_estimate_rl(
    policy_class,
    data: TransitionDataset,
    ctx: EvalContext,
    conf: ConfidenceParams,
    sup_callback,
    rng_seed: int = 0,
) -> float:
    """Empirical Rademacher complexity of the return functional over a policy class.

    Direct estimator (default): for each sign vector, the callback maximizes
    |sum_n sigma_n g_n(pi)| over the class, where g_n(pi) is the normalized
    return of the n-th stitched episode under pi; the estimate averages
    (2 / n_tilde) times those suprema.

    Surrogate estimator: the one-sided expression
    (2 / n_tilde) * E|sum sigma| * sup_pi |v_mfmc~ - d~ - c| - 2, with all
    quantities in normalized units and c twice the unit-range Hoeffding term.
    It factorizes because the inner quantity does not depend on the episode
    index, so E|sum sigma| is computed in closed form.

    Either way the result is clamped below at 0.
    """
    if sup_callback is None:
        raise ValueError("rademacher_estimate_rl needs a sup-optimizer callback")
    n = ctx.n_tilde

    def returns_fn(params) -> np.ndarray:
        from srmrl.policies import Policy

        res = ctx.evaluate(Policy(policy_class, params), data, keep_episodes=False)
        return ctx.normalize_batch(res.episode_returns)

    if ctx.estimator == "direct":
        if conf.use_exact(n):
            if n > 20:
                raise CapacityError(f"exact enumeration over 2^{n} sign vectors refused (n > 20)")
            signs = list(_enumerate_signs(n))
        else:
            signs = list(_draw_signs(n, conf.sigma_draws, rng_seed))
        # the sup is deterministic per sign vector, so repeated draws (common
        # for small n_tilde) are served from a cache; averages are unchanged
        cache: dict[tuple, float] = {}
        vals = []
        for sigma in signs:
            key = tuple(sigma)
            if key not in cache:
                cache[key] = sup_callback(policy_class, sigma, returns_fn)
            vals.append(cache[key])
        return max(0.0, (2.0 / n) * float(np.mean(vals)))

    # surrogate
    c = 2.0 * math.sqrt(-math.log(conf.delta) / (2.0 * ctx.conc_n(data)))

    def centered_value(params) -> float:
        from srmrl.policies import Policy

        res = ctx.evaluate(Policy(policy_class, params), data, keep_episodes=False)
        v_norm = float(ctx.normalize_batch(np.array([res.v_mfmc]))[0])
        return v_norm - res.discrepancy_d / ctx.return_range.width - c

    sup_val = sup_callback.sup_abs_scalar(policy_class, centered_value)
    return max(0.0, (2.0 / n) * exp_abs_sign_sum(n) * sup_val - 2.0)


@dataclass(frozen=True)
class BoundReport:
    """Full decomposition of one return lower bound.

    rademacher_estimate and rademacher_error_term are in normalized (unit
    range) units; omega = (B - A) * (estimate + error term) is in return
    units, as are the remaining fields.
    """

    v_mfmc: float
    discrepancy_d: float
    hoeffding_term: float
    rademacher_estimate: float
    rademacher_error_term: float
    omega: float
    lower_bound: float
    confidence_multiplier: int
    class_index: int = 0
    n_tilde: int = 0
    n_conc: int = 0
    estimator: str = "direct"

    FIELDS = (
        "class_index", "v_mfmc", "discrepancy_d", "hoeffding_term",
        "rademacher_estimate", "rademacher_error_term", "omega",
        "lower_bound", "confidence_multiplier", "n_tilde", "n_conc", "estimator",
    )

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def lower_bound_return(
    pi,
    policy_class,
    data: TransitionDataset,
    conf: ConfidenceParams,
    ctx: EvalContext,
    rng_seed: int = 0,
    class_index: int = 0,
) -> BoundReport:
    """Lower bound on the true return of pi, uniform over its policy class.

    Composes the stitched estimate, the discrepancy penalty, a doubled
    Hoeffding term (stitched-vs-expected and expected-vs-true), and the
    capacity penalty.  Four delta-events stack with the direct Rademacher
    estimator (two concentration, one Omega, one estimation error); the
    surrogate adds its own one-sided event, making five.
    """
    res = ctx.evaluate(pi, data, keep_episodes=False)
    n_conc = ctx.conc_n(data)
    hoeff = hoeffding_penalty(ctx.return_range, n_conc, conf.delta)
    rad = rademacher_estimate_rl(policy_class, data, ctx, conf, ctx.sup_optimizer, rng_seed)
    omega_norm = omega_penalty(rad, n_conc, conf.delta)
    err_term = omega_norm - rad
    omega = ctx.return_range.width * omega_norm
    lb = res.v_mfmc - res.discrepancy_d - 2.0 * hoeff - omega
    return BoundReport(
        v_mfmc=res.v_mfmc,
        discrepancy_d=res.discrepancy_d,
        hoeffding_term=hoeff,
        rademacher_estimate=rad,
        rademacher_error_term=err_term,
        omega=omega,
        lower_bound=lb,
        confidence_multiplier=4 if ctx.estimator == "direct" else 5,
        class_index=class_index,
        n_tilde=ctx.n_tilde,
        n_conc=n_conc,
        estimator=ctx.estimator,
    )


def mfmc_pac_lower_bound(result: MfmcResult, rng: ReturnRange, n: int, delta: float) -> float:
    """Single-policy bound: v_mfmc - d - (B - A) sqrt(-ln delta / 2n)."""
    return result.v_mfmc - result.discrepancy_d - hoeffding_penalty(rng, n, delta)
