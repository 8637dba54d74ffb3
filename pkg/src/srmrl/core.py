"""Episodes, transition datasets, return accounting, and dataset files.

Finite-horizon, undiscounted MDP data model.  An episode of horizon T holds
states s_0..s_T, actions a_0..a_{T-1} and per-step rewards rho(s_0)..
rho(s_{T-1}); its return is the plain sum of rewards.  Episode batches are
re-indexed into flat one-step transition pools, which is the substrate the
stitching estimator consumes.

All containers are immutable after construction (numpy buffers are marked
read-only) and every operation here is pure, so concurrent readers are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CapacityError(ValueError):
    """A request exceeds what the available data can supply."""


class DataFormatError(ValueError):
    """A dataset or policy file does not match the expected layout."""


def derive_seed(*parts: int) -> int:
    """Stable child seed from integer key parts (platform independent)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.flags.writeable = False
    return a


def _readonly_int(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.int64))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ReturnRange:
    """Known bounds A <= episode return <= B for a domain.

    The bounds are a required domain input, never inferred from data: the
    confidence penalties are scaled by B - A and a data-derived range would
    invalidate them.
    """

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("return range must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"return range requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Episode:
    """One realized episode: states (T+1, d_S), actions (T, d_A), rewards (T,).

    Rewards are stored rather than recomputed so datasets are self-contained
    files; validation against a known reward function happens at collection
    time, not here.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        states = _readonly(np.atleast_2d(self.states))
        actions = _readonly(np.atleast_2d(self.actions))
        rewards = _readonly(np.atleast_1d(self.rewards))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        T = actions.shape[0]
        if states.shape[0] != T + 1:
            raise ValueError(
                f"episode needs T+1 states for T actions, got {states.shape[0]} states, {T} actions"
            )
        if rewards.shape[0] != T:
            raise ValueError(f"episode needs T rewards, got {rewards.shape[0]} for T={T}")
        if not (np.isfinite(states).all() and np.isfinite(actions).all() and np.isfinite(rewards).all()):
            raise ValueError("episode contains non-finite values")

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]


@dataclass(frozen=True)
class Transition:
    """A single (s, a, s') step with provenance back to its source episode."""

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    reward: float
    source_episode: int
    source_step: int


@dataclass(frozen=True)
class TransitionDataset:
    """Flat pool of N*T one-step transitions re-indexed from N episodes.

    Immutable: stitching never mutates the pool, it tracks consumption in a
    separate availability mask owned by the caller.
    """

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    reward: np.ndarray
    episode_id: np.ndarray
    step: np.ndarray
    n_episodes: int
    horizon: int
    return_range: ReturnRange | None = None

    def __post_init__(self):
        object.__setattr__(self, "s", _readonly(self.s))
        object.__setattr__(self, "a", _readonly(self.a))
        object.__setattr__(self, "s_next", _readonly(self.s_next))
        object.__setattr__(self, "reward", _readonly(self.reward))
        object.__setattr__(self, "episode_id", _readonly_int(self.episode_id))
        object.__setattr__(self, "step", _readonly_int(self.step))
        n = self.s.shape[0]
        if n != self.n_episodes * self.horizon:
            raise ValueError(
                f"expected N*T = {self.n_episodes * self.horizon} transitions, got {n}"
            )

    def __len__(self) -> int:
        return self.s.shape[0]

    @property
    def state_dim(self) -> int:
        return self.s.shape[1]

    @property
    def action_dim(self) -> int:
        return self.a.shape[1]

    def transition(self, i: int) -> Transition:
        return Transition(
            s=self.s[i],
            a=self.a[i],
            s_next=self.s_next[i],
            reward=float(self.reward[i]),
            source_episode=int(self.episode_id[i]),
            source_step=int(self.step[i]),
        )


class DisturbanceStream:
    """Reproducible per-step disturbance draws.

    A formal device only: disturbances are consumed during simulation and are
    never stored in datasets, which hold realized states.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed])))

    def uniform(self, low, high, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)


def episode_return(e: Episode) -> float:
    """Sum of the T per-step rewards of one episode."""
    return float(np.sum(e.rewards))


def empirical_return(episodes: list[Episode]) -> float:
    """Mean episode return over a batch of on-policy episodes."""
    if len(episodes) == 0:
        raise ValueError("empirical return of an empty episode list is undefined")
    horizons = {e.horizon for e in episodes}
    if len(horizons) != 1:
        raise ValueError(f"episodes must share a horizon, got {sorted(horizons)}")
    return float(np.mean([episode_return(e) for e in episodes]))


def normalize_returns(g: float, rng: ReturnRange) -> float:
    """Affinely map a return in [A, B] onto [-1, 0] (B -> 0, A -> -1)."""
    if not (rng.lo <= g <= rng.hi):
        raise ValueError(f"return {g} outside declared range [{rng.lo}, {rng.hi}]")
    return (g - rng.hi) / rng.width


def reindex_dataset(
    episodes: list[Episode], return_range: ReturnRange | None = None
) -> TransitionDataset:
    """Flatten N episodes of shared horizon T into an N*T transition pool.

    Source indices are preserved, so grouping by (episode, step) recovers the
    input episodes exactly.
    """
    if len(episodes) == 0:
        raise ValueError("cannot reindex an empty episode list")
    horizons = {e.horizon for e in episodes}
    if len(horizons) != 1:
        raise ValueError(f"episodes must share a horizon, got {sorted(horizons)}")
    T = horizons.pop()
    N = len(episodes)
    s = np.concatenate([e.states[:-1] for e in episodes], axis=0)
    s_next = np.concatenate([e.states[1:] for e in episodes], axis=0)
    a = np.concatenate([e.actions for e in episodes], axis=0)
    r = np.concatenate([e.rewards for e in episodes], axis=0)
    eid = np.repeat(np.arange(N, dtype=np.int64), T)
    step = np.tile(np.arange(T, dtype=np.int64), N)
    return TransitionDataset(
        s=s, a=a, s_next=s_next, reward=r, episode_id=eid, step=step,
        n_episodes=N, horizon=T, return_range=return_range,
    )


def validate_episode_rewards(e: Episode, reward_fn, atol: float = 0.0) -> None:
    """Check stored rewards against a known reward function.

    Datasets are self-contained (rewards stored, not recomputed); when the
    generating reward function is available this verifies consistency.
    """
    want = np.asarray(reward_fn(e.states[:-1]), dtype=np.float64)
    if not np.allclose(e.rewards, want, rtol=0.0, atol=atol):
        worst = float(np.max(np.abs(e.rewards - want)))
        raise ValueError(f"stored rewards deviate from the reward function by up to {worst}")


def episodes_from_dataset(ds: TransitionDataset) -> list[Episode]:
    """Invert reindex_dataset using the stored source indices."""
    episodes = []
    for n in range(ds.n_episodes):
        sel = np.flatnonzero(ds.episode_id == n)
        sel = sel[np.argsort(ds.step[sel], kind="stable")]
        if sel.size != ds.horizon:
            raise DataFormatError(f"episode {n} has {sel.size} steps, expected {ds.horizon}")
        states = np.concatenate([ds.s[sel], ds.s_next[sel[-1:]]], axis=0)
        episodes.append(Episode(states=states, actions=ds.a[sel], rewards=ds.reward[sel]))
    return episodes


# ---------------------------------------------------------------------------
# Dataset file format
#
# One transition per line:
#   episode_id, step, s[0..d_S-1], a[0..d_A-1], s_next[0..d_S-1], reward
# preceded by a single header line
#   # d_S=..,d_A=..,T=..,N=..,A=..,B=..[,stitched=true]
# Floats are written with 17 significant digits so round trips are exact.
# ---------------------------------------------------------------------------

_FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


def write_dataset(
    ds: TransitionDataset,
    path: str | Path,
    stitched: bool = False,
    extra_header: dict | None = None,
) -> None:
    if ds.return_range is None:
        raise ValueError("dataset needs a return range to be written (header carries A, B)")
    path = Path(path)
    header = (
        f"# d_S={ds.state_dim},d_A={ds.action_dim},T={ds.horizon},N={ds.n_episodes},"
        f"A={_fmt(ds.return_range.lo)},B={_fmt(ds.return_range.hi)}"
    )
    if stitched:
        header += ",stitched=true"
    for k, v in (extra_header or {}).items():
        header += f",{k}={v}"
    lines = [header]
    for i in range(len(ds)):
        fields = [str(int(ds.episode_id[i])), str(int(ds.step[i]))]
        fields += [_fmt(v) for v in ds.s[i]]
        fields += [_fmt(v) for v in ds.a[i]]
        fields += [_fmt(v) for v in ds.s_next[i]]
        fields.append(_fmt(ds.reward[i]))
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n")


def dataset_header(path: str | Path) -> dict:
    """Parse the key=value header line of a dataset file."""
    with Path(path).open() as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        raise DataFormatError(f"{path}: missing '#' header line")
    meta = {}
    for item in first.lstrip("#").strip().split(","):
        if "=" not in item:
            raise DataFormatError(f"{path}: bad header field {item!r}")
        k, v = item.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def read_dataset(path: str | Path) -> TransitionDataset:
    path = Path(path)
    meta = dataset_header(path)
    with path.open() as fh:
        fh.readline()
        try:
            d_s = int(meta["d_S"])
            d_a = int(meta["d_A"])
            T = int(meta["T"])
            N = int(meta["N"])
            rng = ReturnRange(float(meta["A"]), float(meta["B"]))
        except KeyError as exc:
            raise DataFormatError(f"{path}: header missing {exc}") from exc
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    expect_cols = 2 + 2 * d_s + d_a + 1
    if rows.shape[1] != expect_cols:
        raise DataFormatError(
            f"{path}: expected {expect_cols} columns for d_S={d_s}, d_A={d_a}, got {rows.shape[1]}"
        )
    if rows.shape[0] != N * T:
        raise DataFormatError(f"{path}: expected N*T={N * T} rows, got {rows.shape[0]}")
    c = 2
    return TransitionDataset(
        s=rows[:, c : c + d_s],
        a=rows[:, c + d_s : c + d_s + d_a],
        s_next=rows[:, c + d_s + d_a : c + 2 * d_s + d_a],
        reward=rows[:, -1],
        episode_id=rows[:, 0].astype(np.int64),
        step=rows[:, 1].astype(np.int64),
        n_episodes=N,
        horizon=T,
        return_range=rng,
    )
