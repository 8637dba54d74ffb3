"""Policy search and class selection.

The inner search maximizes the penalized stitched return (v_mfmc - d) inside
one class with finite-difference ascent from random restarts; the objective
is treated as a black box because stitching makes it piecewise constant in
the parameters.  The outer loop walks the nested structure, attaches a bound
report to each class's champion, and keeps the class with the best lower
bound; the baseline selector drops the penalty and searches only the largest
class.

Restart seeds derive from (master_seed, restart index), so runs are
reproducible and the best-over-restarts is monotone when restarts grow.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from srmrl.bounds import BoundReport, ConfidenceParams, EvalContext, lower_bound_return
from srmrl.core import TransitionDataset, derive_seed
from srmrl.policies import Policy, PolicyStructure


@dataclass(frozen=True)
class OptimizerConfig:
    """Finite-difference ascent settings.

    step_size, fd_step and min_step are fractions of the class's parameter
    scale (its magnitude limit), so the same config works across classes of
    very different extents.  A step that improves by less than
    convergence_tol halves the step length; the search stops when the step
    falls below min_step or max_iterations is hit.
    """

    restarts: int = 20
    max_iterations: int = 50
    step_size: float = 0.05
    fd_step: float = 1e-3
    convergence_tol: float = 1e-6
    min_step: float = 1e-4
    master_seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("step_size", "fd_step", "convergence_tol", "min_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")


@dataclass(frozen=True)
class CandidateResult:
    params: np.ndarray
    objective: float
    class_index: int
    restart_id: int
    iterations_used: int


_derived_seed = derive_seed


def _restart_rng(master_seed: int, restart: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, restart])))


def _ascend(objective, cls, x0: np.ndarray, cfg: OptimizerConfig):
    """Projected fixed-length gradient ascent with step halving on stalls."""
    scale = cls.param_scale if cls.param_scale > 0 else 1.0
    step = cfg.step_size * scale
    h = cfg.fd_step * scale
    min_step = cfg.min_step * scale
    x = cls.project(np.asarray(x0, dtype=np.float64))
    val = objective(x)
    best_x, best_val = x, val
    iters = 0
    g = np.empty_like(x)
    for _ in range(cfg.max_iterations):
        iters += 1
        it = np.nditer(x, flags=["multi_index"])
        for _v in it:
            idx = it.multi_index
            xp = x.copy()
            xp[idx] += h
            xm = x.copy()
            xm[idx] -= h
            g[idx] = (objective(xp) - objective(xm)) / (2.0 * h)
        gnorm = float(np.sqrt((g * g).sum()))
        if gnorm == 0.0:
            break
        x_try = cls.project(x + (step / gnorm) * g)
        val_try = objective(x_try)
        gain = val_try - val
        if gain > 0.0:
            x, val = x_try, val_try
            if val > best_val:
                best_x, best_val = x, val
        if gain <= cfg.convergence_tol:
            step *= 0.5
            if step < min_step:
                break
    return best_x, best_val, iters


def maximize_penalized_return(
    policy_class,
    data: TransitionDataset,
    ctx: EvalContext,
    cfg: OptimizerConfig,
    penalty_weight: float = 1.0,
    class_index: int = 1,
) -> CandidateResult:
    """Best policy in the class under v_mfmc - penalty_weight * d.

    Runs cfg.restarts independent searches from uniform feasible starts and
    returns the strictly best candidate (ties keep the earliest restart).  A
    zero-limit class is a singleton: its one policy is evaluated directly.
    """

    def objective(params) -> float:
        res = ctx.evaluate(Policy(policy_class, params), data, keep_episodes=False)
        return res.v_mfmc - penalty_weight * res.discrepancy_d

    if policy_class.param_scale == 0.0:
        p = policy_class.zero_params()
        return CandidateResult(p, objective(p), class_index, 0, 0)

    best: CandidateResult | None = None
    for r in range(cfg.restarts):
        x0 = policy_class.sample_params(_restart_rng(cfg.master_seed, r))
        x, val, iters = _ascend(objective, policy_class, x0, cfg)
        if best is None or val > best.objective:
            best = CandidateResult(x, val, class_index, r, iters)
    assert best is not None
    return best


@dataclass(frozen=True)
class SupOptimizer:
    """Maximizes |f| over a policy class with the restart machinery.

    Used as the sup callback of the Rademacher estimators: called with a sign
    vector it maximizes |sum_n sigma_n g_n(pi)| through two signed ascent
    passes (and evaluates singleton classes directly).
    """

    cfg: OptimizerConfig

    def __call__(self, policy_class, sigma, returns_fn) -> float:
        sigma = np.asarray(sigma, dtype=np.float64)

        def h(params) -> float:
            return float(sigma @ returns_fn(params))

        return self.sup_abs_scalar(policy_class, h)

    def sup_abs_scalar(self, policy_class, fn) -> float:
        if policy_class.param_scale == 0.0:
            return abs(fn(policy_class.zero_params()))
        best_signed = []
        for sign in (1.0, -1.0):
            def signed(params, _s=sign):
                return _s * fn(params)

            best = -np.inf
            for r in range(self.cfg.restarts):
                x0 = policy_class.sample_params(_restart_rng(self.cfg.master_seed, r))
                _, val, _ = _ascend(signed, policy_class, x0, self.cfg)
                if val > best:
                    best = val
            best_signed.append(best)
        # each entry is a realized f (or -f) value, so the abs is attained
        return max(abs(best_signed[0]), abs(best_signed[1]))


def rademacher_sup_callback(policy_class, sign_vector, returns_fn, cfg: OptimizerConfig) -> float:
    """sup over the class of |sum_n sigma_n g_n(pi)| for one sign vector."""
    return SupOptimizer(cfg)(policy_class, sign_vector, returns_fn)


def srm_select(
    structure: PolicyStructure,
    data: TransitionDataset,
    conf: ConfidenceParams,
    ctx: EvalContext,
    cfg: OptimizerConfig,
) -> tuple[int, CandidateResult, list[BoundReport]]:
    """Pick the class index and policy maximizing the return lower bound.

    For every class k the penalized-return champion is found, its bound
    report assembled, and the k with the largest lower bound wins; exact ties
    go to the smaller class.  All reports are returned for diagnostics.
    """
    reports: list[BoundReport] = []
    candidates: list[CandidateResult] = []
    k_hat = 1
    for k, cls in enumerate(structure.classes, start=1):
        cfg_k = replace(cfg, master_seed=_derived_seed(cfg.master_seed, 1, k))
        cand = maximize_penalized_return(cls, data, ctx, cfg_k, class_index=k)
        rep = lower_bound_return(
            Policy(cls, cand.params), cls, data, conf, ctx,
            rng_seed=_derived_seed(cfg.master_seed, 2, k), class_index=k,
        )
        candidates.append(cand)
        reports.append(rep)
        if rep.lower_bound > reports[k_hat - 1].lower_bound:
            k_hat = k
    return k_hat, candidates[k_hat - 1], reports


def mr_select(
    structure: PolicyStructure,
    data: TransitionDataset,
    ctx: EvalContext,
    cfg: OptimizerConfig,
) -> CandidateResult:
    """Return-maximization baseline: raw v_mfmc over the single largest class."""
    k = len(structure)
    cfg_k = replace(cfg, master_seed=_derived_seed(cfg.master_seed, 1, k))
    return maximize_penalized_return(
        structure.largest, data, ctx, cfg_k, penalty_weight=0.0, class_index=k
    )
