"""Flat key-value experiment configuration.

A config file is a flat YAML mapping of typed scalars and arrays; every
benchmark constant is a named key with its conventional value as default, so
a config plus the code version pins every output byte.  Unknown keys are
rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from srmrl.bounds import ConfidenceParams, EvalContext
from srmrl.domains import DomainSpec, make_domain
from srmrl.mfmc import DistanceWeights, default_n_tilde
from srmrl.optimize import OptimizerConfig, SupOptimizer
from srmrl.policies import PolicyStructure, build_structure, grid_centers


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


_PRESET_GRID = {"toy1d": [4], "pendulum": [4, 4], "intruder": [2, 2, 2, 2]}
_PRESET_LIMITS = {
    "toy1d": [0.0, 0.125, 0.25, 0.375, 0.5],
    "pendulum": [0.0, 50.0],
    "intruder": [0.0, 0.1],
}


@dataclass
class ExperimentConfig:
    # domain preset and overrides
    domain: str = "toy1d"
    horizon: int | None = None
    noise_scale: float = 1.0
    toy_reward_sign: int = -1
    intruder_negate_reward: bool = False
    intruder_count: int = 1
    intruder_min_distance: float = 0.1
    intruder_camera_radius: float = 0.5
    intruder_speed: float = 0.05

    # policy structure
    representation: str = "rbf"
    rbf_grid: list | None = None      # basis counts per state dimension
    limits: list | None = None        # magnitude caps (or untied counts for tying)
    invdist_eps: float = 1e-3
    invdist_scheme: str = "cap"
    invdist_init_scale: float = 1.0

    # estimator settings
    delta: float = 0.05
    sigma_draws: int = 100
    exact_enumeration: str | bool = "auto"
    rademacher_estimator: str = "direct"
    hoeffding_n: str = "artificial"
    n_tilde_fraction: float = 0.1
    state_weights: list | None = None
    action_weights: list | None = None

    # optimizer
    restarts: int = 20
    max_iterations: int = 50
    step_size: float = 0.05
    fd_step: float = 1e-3
    convergence_tol: float = 1e-6
    min_step: float = 1e-4
    master_seed: int = 0
    rad_restarts: int = 3
    rad_max_iterations: int = 15

    # collection and ground truth
    n_episodes: int = 50
    mc_rollouts: int = 2000

    # sweep grid
    sweep_n_episodes: list = field(default_factory=lambda: [5, 10, 20, 50, 100])
    sweep_seeds: int = 30
    sweep_algorithms: list = field(default_factory=lambda: ["srm", "mr"])
    record_wall_time: bool = False

    out_dir: str = "out"

    def __post_init__(self):
        if self.domain not in _PRESET_GRID:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.representation not in ("rbf", "invdist"):
            raise ConfigError(f"unknown representation {self.representation!r}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n_tilde_fraction <= 0:
            raise ConfigError("n_tilde_fraction must be positive")
        if self.rademacher_estimator not in ("direct", "surrogate"):
            raise ConfigError(f"unknown rademacher_estimator {self.rademacher_estimator!r}")
        if self.hoeffding_n not in ("artificial", "episodes"):
            raise ConfigError(f"unknown hoeffding_n {self.hoeffding_n!r}")
        if isinstance(self.exact_enumeration, str) and self.exact_enumeration not in ("auto", "true", "false"):
            raise ConfigError("exact_enumeration must be auto, true, or false")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be >= 1")
        if self.sweep_seeds < 1:
            raise ConfigError("sweep_seeds must be >= 1")
        if any(a not in ("srm", "mr") for a in self.sweep_algorithms):
            raise ConfigError(f"sweep_algorithms entries must be srm or mr, got {self.sweep_algorithms}")
        if any(int(n) < 1 for n in self.sweep_n_episodes):
            raise ConfigError("sweep_n_episodes entries must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")

    # -- assembled pieces ---------------------------------------------------

    def exact_enum_flag(self) -> bool | None:
        if isinstance(self.exact_enumeration, bool):
            return self.exact_enumeration
        return {"auto": None, "true": True, "false": False}[self.exact_enumeration]

    def make_spec(self) -> DomainSpec:
        kw = {"noise_scale": self.noise_scale}
        if self.horizon is not None:
            kw["horizon"] = int(self.horizon)
        if self.domain == "toy1d":
            kw["sign_mode"] = int(self.toy_reward_sign)
        elif self.domain == "intruder":
            kw.update(
                negate_reward=bool(self.intruder_negate_reward),
                n_intruders=int(self.intruder_count),
                d_min=float(self.intruder_min_distance),
                r_cam=float(self.intruder_camera_radius),
                speed=float(self.intruder_speed),
            )
        return make_domain(self.domain, **kw)

    def make_weights(self, spec: DomainSpec) -> DistanceWeights:
        w = spec.default_weights()
        ws = np.asarray(self.state_weights, dtype=float) if self.state_weights else w.state_scale
        wa = np.asarray(self.action_weights, dtype=float) if self.action_weights else w.action_scale
        return DistanceWeights(ws, wa)

    def make_structure(self, spec: DomainSpec) -> PolicyStructure:
        grid = self.rbf_grid if self.rbf_grid is not None else _PRESET_GRID[self.domain]
        limits = self.limits if self.limits is not None else _PRESET_LIMITS[self.domain]
        centers = grid_centers(spec.state_low, spec.state_high, grid)
        w = self.make_weights(spec)
        try:
            return build_structure(
                self.representation, limits,
                centers=centers, action_low=spec.action_low, action_high=spec.action_high,
                state_scale=w.state_scale, action_scale=w.action_scale,
                eps=self.invdist_eps, scheme=self.invdist_scheme,
                init_scale=self.invdist_init_scale,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_confidence(self) -> ConfidenceParams:
        return ConfidenceParams(
            delta=self.delta, sigma_draws=self.sigma_draws,
            exact_enumeration=self.exact_enum_flag(),
        )

    def make_optimizer(self, master_seed: int | None = None) -> OptimizerConfig:
        return OptimizerConfig(
            restarts=self.restarts, max_iterations=self.max_iterations,
            step_size=self.step_size, fd_step=self.fd_step,
            convergence_tol=self.convergence_tol, min_step=self.min_step,
            master_seed=self.master_seed if master_seed is None else master_seed,
        )

    def make_sup_optimizer(self, master_seed: int | None = None) -> SupOptimizer:
        return SupOptimizer(OptimizerConfig(
            restarts=self.rad_restarts, max_iterations=self.rad_max_iterations,
            step_size=self.step_size, fd_step=self.fd_step,
            convergence_tol=self.convergence_tol, min_step=self.min_step,
            master_seed=self.master_seed if master_seed is None else master_seed,
        ))

    def n_tilde(self, n_episodes: int) -> int:
        if self.n_tilde_fraction == 0.1:
            return default_n_tilde(n_episodes)
        return max(1, int(np.floor(self.n_tilde_fraction * n_episodes)))

    def make_context(
        self, spec: DomainSpec, n_episodes: int, sup_seed: int | None = None
    ) -> EvalContext:
        return EvalContext(
            reward_fn=spec.reward,
            return_range=spec.return_range,
            start_state=spec.start_state,
            weights=self.make_weights(spec),
            lipschitz=spec.lipschitz,
            n_tilde=self.n_tilde(n_episodes),
            hoeffding_n_mode=self.hoeffding_n,
            estimator=self.rademacher_estimator,
            sup_optimizer=self.make_sup_optimizer(sup_seed),
        )


_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a flat mapping")
    unknown = set(raw) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for key, val in raw.items():
        if isinstance(val, dict):
            raise ConfigError(f"{path}: key {key!r} is nested; the config is flat")
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}")


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=False))
