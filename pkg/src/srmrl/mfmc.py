"""Model-free Monte Carlo evaluation by trajectory stitching.

Builds artificial on-policy episodes out of a batch transition pool: each
step greedily selects the nearest available (s, a, s') under a weighted
state+action distance, consumes it, and continues from its s'.  The realized
selection distances delta_t, amplified by Lipschitz horizon coefficients,
give the discrepancy penalty d that bounds how far the stitched return
estimate can sit from the true return.

Stitching is sequential by construction (the shared consumption mask makes
selections order dependent); distinct evaluations are independent and can
run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from srmrl import _kernels
from srmrl.core import CapacityError, TransitionDataset


@dataclass(frozen=True)
class DistanceWeights:
    """Per-dimension scales of the stitching distance.

    The distance between pool entries and the query (s~, a~) is
    ||s - s~||_ws + ||a - a~||_wa with weighted Euclidean norms.  Defaults
    elsewhere are 1/range per dimension so state and action terms stay
    commensurate.
    """

    state_scale: np.ndarray
    action_scale: np.ndarray

    def __post_init__(self):
        ws = np.ascontiguousarray(np.atleast_1d(self.state_scale), dtype=np.float64)
        wa = np.ascontiguousarray(np.atleast_1d(self.action_scale), dtype=np.float64)
        object.__setattr__(self, "state_scale", ws)
        object.__setattr__(self, "action_scale", wa)
        if not ((ws > 0).all() and (wa > 0).all()):
            raise ValueError("distance scales must be strictly positive")


@dataclass(frozen=True)
class LipschitzConstants:
    """Declared Lipschitz constants of dynamics (l_m), reward (l_rho), policy (l_pi)."""

    l_m: float
    l_rho: float
    l_pi: float = 0.0

    def __post_init__(self):
        if self.l_m < 0 or self.l_rho < 0 or self.l_pi < 0:
            raise ValueError("Lipschitz constants must be nonnegative")

    def with_policy(self, l_pi: float) -> "LipschitzConstants":
        return LipschitzConstants(self.l_m, self.l_rho, l_pi)


@dataclass(frozen=True)
class ArtificialEpisode:
    """A stitched state/action sequence with its per-step selection distances."""

    states: np.ndarray          # (T+1, d_S)
    actions: np.ndarray         # (T, d_A)
    deltas: np.ndarray          # (T,)
    used_transitions: np.ndarray  # (T,) indices into the pool
    full_pool_deltas: np.ndarray  # (T,) minima ignoring consumption


@dataclass(frozen=True)
class MfmcResult:
    v_mfmc: float
    discrepancy_d: float
    episodes: list[ArtificialEpisode]
    n_tilde: int
    episode_returns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    # accumulated (depleted-pool minus full-pool) gap across all selections;
    # 0 means consumption never changed a realized delta
    delta_pool_gap: float = 0.0


def default_n_tilde(n_episodes: int) -> int:
    """Number of artificial episodes: one tenth of the data episodes, at least 1."""
    return max(1, int(np.floor(0.1 * n_episodes)))


def transition_distance(p, q, w: DistanceWeights) -> float:
    """Weighted distance ||s-s'||_S + ||a-a'||_A between two (state, action) pairs."""
    s1, a1 = p
    s2, a2 = q
    s1 = np.atleast_1d(np.asarray(s1, dtype=np.float64))
    s2 = np.atleast_1d(np.asarray(s2, dtype=np.float64))
    a1 = np.atleast_1d(np.asarray(a1, dtype=np.float64))
    a2 = np.atleast_1d(np.asarray(a2, dtype=np.float64))
    if s1.shape != s2.shape or s1.shape != w.state_scale.shape:
        raise ValueError("state dimension mismatch in transition distance")
    if a1.shape != a2.shape or a1.shape != w.action_scale.shape:
        raise ValueError("action dimension mismatch in transition distance")
    ds2 = 0.0
    for d in range(s1.shape[0]):
        z = w.state_scale[d] * (s1[d] - s2[d])
        ds2 += z * z
    da2 = 0.0
    for j in range(a1.shape[0]):
        z = w.action_scale[j] * (a1[j] - a2[j])
        da2 += z * z
    return float(np.sqrt(ds2) + np.sqrt(da2))


def horizon_coeff(t: int, T: int, L: LipschitzConstants) -> float:
    """Amplification of a step-t stitching error over the remaining horizon.

    L_rho * sum_{i=0}^{T-t-1} q^i with q = l_m * (1 + l_pi); closed form
    (q^{T-t} - 1)/(q - 1) when q != 1, and T - t terms of 1 when q == 1.
    """
    if not 0 <= t < T:
        raise ValueError(f"step t={t} outside horizon T={T}")
    q = L.l_m * (1.0 + L.l_pi)
    k = T - t
    if q == 1.0:
        geom = float(k)
    else:
        geom = (q ** k - 1.0) / (q - 1.0)
    return L.l_rho * geom


def horizon_coeffs(T: int, L: LipschitzConstants) -> np.ndarray:
    return np.array([horizon_coeff(t, T, L) for t in range(T)])


def _policy_call(pi) -> Callable[[np.ndarray], np.ndarray]:
    act1 = getattr(pi, "act1", None)
    if act1 is not None:
        return act1
    return lambda s: np.atleast_1d(np.asarray(pi(s), dtype=np.float64))


def _stitch_python(pi, data: TransitionDataset, mask, start, T, n_tilde, w: DistanceWeights):
    # Mirrors the numba kernel: sequential accumulation over dimensions,
    # first-index argmin tie-break.
    S, A, SN = data.s, data.a, data.s_next
    d_s, d_a = data.state_dim, data.action_dim
    act = _policy_call(pi)
    states = np.empty((n_tilde, T + 1, d_s))
    actions = np.empty((n_tilde, T, d_a))
    deltas = np.empty((n_tilde, T))
    full_deltas = np.empty((n_tilde, T))
    chosen = np.empty((n_tilde, T), dtype=np.int64)
    for ep in range(n_tilde):
        states[ep, 0] = start
        for t in range(T):
            a = act(states[ep, t])
            actions[ep, t] = a
            ds2 = np.zeros(len(data))
            for d in range(d_s):
                z = w.state_scale[d] * (S[:, d] - states[ep, t, d])
                ds2 += z * z
            da2 = np.zeros(len(data))
            for j in range(d_a):
                z = w.action_scale[j] * (A[:, j] - a[j])
                da2 += z * z
            dist = np.sqrt(ds2) + np.sqrt(da2)
            full_deltas[ep, t] = dist.min()
            i = int(np.argmin(np.where(mask, dist, np.inf)))
            mask[i] = False
            chosen[ep, t] = i
            deltas[ep, t] = dist[i]
            states[ep, t + 1] = SN[i]
    return states, actions, deltas, full_deltas, chosen


def _stitch(pi, data: TransitionDataset, n_tilde: int, w: DistanceWeights, horizon: int | None):
    T = data.horizon if horizon is None else int(horizon)
    need = n_tilde * T
    if n_tilde < 1:
        raise ValueError("n_tilde must be at least 1")
    if need > len(data):
        raise CapacityError(
            f"stitching needs {need} transitions ({n_tilde} episodes x T={T}) "
            f"but only {len(data)} are available"
        )
    start = getattr(pi, "start_state", None)
    if start is None:
        raise ValueError("policy carries no start state; wrap it or pass one explicitly")
    start = np.asarray(start, dtype=np.float64)
    mask = np.ones(len(data), dtype=np.bool_)
    spec = getattr(pi, "kernel_spec", None)
    if spec is not None:
        kind, phi, centers, width, eps, pol_scale, act_lo, act_hi = spec()
        out = _kernels.stitch_kernel(
            data.s, data.a, data.s_next, mask, start, T, n_tilde,
            w.state_scale, w.action_scale,
            kind, phi, centers, width, eps, pol_scale, act_lo, act_hi,
        )
        if out[4].min() < 0:  # sentinel: mask raced to empty (should not happen)
            raise CapacityError("transition pool exhausted during stitching")
        return out
    return _stitch_python(pi, data, mask, start, T, n_tilde, w)


def build_artificial_episodes(
    pi,
    data: TransitionDataset,
    n_tilde: int,
    w: DistanceWeights,
    start_state=None,
    horizon: int | None = None,
) -> list[ArtificialEpisode]:
    """Stitch n_tilde artificial episodes of policy pi from the pool.

    Episodes are built sequentially and share one consumption mask, so no
    transition appears twice across the returned episodes.  Deterministic:
    ties in the argmin go to the lowest transition index.
    """
    if start_state is not None:
        pi = _WithStart(pi, start_state)
    states, actions, deltas, full_deltas, chosen = _stitch(pi, data, n_tilde, w, horizon)
    return [
        ArtificialEpisode(
            states=states[n], actions=actions[n], deltas=deltas[n],
            used_transitions=chosen[n], full_pool_deltas=full_deltas[n],
        )
        for n in range(n_tilde)
    ]


class _WithStart:
    """Adapter attaching a start state to a bare policy callable."""

    def __init__(self, pi, start_state):
        self._pi = pi
        self.start_state = np.asarray(start_state, dtype=np.float64)
        spec = getattr(pi, "kernel_spec", None)
        if spec is not None:
            self.kernel_spec = spec
        act1 = getattr(pi, "act1", None)
        if act1 is not None:
            self.act1 = act1

    def __call__(self, s):
        return self._pi(s)


def stitched_to_dataset(
    episodes: list[ArtificialEpisode],
    reward_fn: Callable[[np.ndarray], np.ndarray],
    return_range=None,
) -> TransitionDataset:
    """Re-index stitched episodes as a transition pool for export.

    Rewards are recomputed on the stitched states; write with
    core.write_dataset(..., stitched=True) to mark the provenance flag.
    """
    from srmrl.core import Episode, reindex_dataset

    out = []
    for e in episodes:
        T = e.actions.shape[0]
        rewards = np.asarray(reward_fn(e.states[:T]), dtype=np.float64)
        out.append(Episode(states=e.states, actions=e.actions, rewards=rewards))
    return reindex_dataset(out, return_range=return_range)


def mfmc_evaluate(
    pi,
    data: TransitionDataset,
    n_tilde: int,
    w: DistanceWeights,
    L: LipschitzConstants,
    reward_fn: Callable[[np.ndarray], np.ndarray],
    start_state=None,
    keep_episodes: bool = True,
    horizon: int | None = None,
) -> MfmcResult:
    """Stitched return estimate and Lipschitz discrepancy penalty for pi.

    v_mfmc averages sum_t rho(s~_t), t < T, over the stitched episodes, with
    rewards recomputed from reward_fn on the stitched states (the stitched
    state comes from a different donor than the recorded reward).  The
    penalty is max over episodes of sum_t horizon_coeff(t) * delta_t.
    """
    if start_state is not None:
        pi = _WithStart(pi, start_state)
    states, actions, deltas, full_deltas, chosen = _stitch(pi, data, n_tilde, w, horizon)
    T = data.horizon if horizon is None else int(horizon)
    rewards = np.asarray(reward_fn(states[:, :T, :]), dtype=np.float64)
    if rewards.shape != (n_tilde, T):
        raise ValueError(f"reward_fn returned shape {rewards.shape}, expected {(n_tilde, T)}")
    ep_returns = rewards.sum(axis=1)
    coeffs = horizon_coeffs(T, L)
    d = float(np.max((coeffs[None, :] * deltas).sum(axis=1)))
    episodes = []
    if keep_episodes:
        episodes = [
            ArtificialEpisode(
                states=states[n], actions=actions[n], deltas=deltas[n],
                used_transitions=chosen[n], full_pool_deltas=full_deltas[n],
            )
            for n in range(n_tilde)
        ]
    return MfmcResult(
        v_mfmc=float(ep_returns.mean()),
        discrepancy_d=d,
        episodes=episodes,
        n_tilde=n_tilde,
        episode_returns=ep_returns,
        deltas=deltas,
        delta_pool_gap=float(np.sum(deltas - full_deltas)),
    )
