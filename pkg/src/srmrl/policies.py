"""Policy representations and nested policy-class structures.

Two basis-function representations: linear combinations of radial basis
functions, and inverse-distance weightings around fixed anchors.  Structures
are ordered nested sequences of classes (magnitude limits, or parameter
tying for the inverse-distance form), fixed before any data is seen.

Every class knows how to project arbitrary parameters onto its feasible set,
sample feasible parameters uniformly, and report an analytic upper bound on
the Lipschitz constant of its policies.  All evaluation goes through the
shared numba kernels so stitching, rollouts and optimization see bitwise
identical actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from srmrl import _kernels
from srmrl.core import DataFormatError

# max slope magnitude of exp(-c r^2) in r is sqrt(2c) * exp(-1/2)
_GAUSS_SLOPE = float(np.exp(-0.5))

# feasibility slack for float round-off in containment checks
_FEAS_TOL = 1e-12


def _arr(x, dtype=np.float64) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=dtype))


@dataclass(frozen=True)
class RbfPolicyClass:
    """Policies pi(s) = sum_i phi_i * exp(-c * ||s - center_i||^2_w), clipped.

    The exponent norm is the squared weighted Euclidean norm with the class's
    state_scale (range normalization by default).  Feasible parameters have
    every |phi_ij| <= limit; limit 0 admits only the zero policy.
    """

    centers: np.ndarray       # (M, d_S)
    width: float              # c >= 0, shared across basis functions
    limit: float              # l_k >= 0, componentwise magnitude cap
    action_low: np.ndarray    # (d_A,)
    action_high: np.ndarray   # (d_A,)
    state_scale: np.ndarray   # (d_S,)
    action_scale: np.ndarray  # (d_A,)

    def __post_init__(self):
        object.__setattr__(self, "centers", _arr(np.atleast_2d(self.centers)))
        object.__setattr__(self, "action_low", _arr(self.action_low))
        object.__setattr__(self, "action_high", _arr(self.action_high))
        object.__setattr__(self, "state_scale", _arr(self.state_scale))
        object.__setattr__(self, "action_scale", _arr(self.action_scale))
        if self.width < 0:
            raise ValueError("rbf width must be nonnegative")
        if self.limit < 0:
            raise ValueError("magnitude limit must be nonnegative")

    @property
    def n_basis(self) -> int:
        return self.centers.shape[0]

    @property
    def state_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def action_dim(self) -> int:
        return self.action_low.shape[0]

    @property
    def param_shape(self) -> tuple[int, int]:
        return (self.n_basis, self.action_dim)

    @property
    def param_scale(self) -> float:
        """Characteristic size of the feasible box (ascent step units)."""
        return self.limit

    def zero_params(self) -> np.ndarray:
        return np.zeros(self.param_shape)

    def contains(self, params: np.ndarray) -> bool:
        params = np.asarray(params)
        return params.shape == self.param_shape and bool(
            (np.abs(params) <= self.limit + _FEAS_TOL).all()
        )

    def project(self, params: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(params, dtype=np.float64), -self.limit, self.limit)

    def sample_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-self.limit, self.limit, self.param_shape)

    def lipschitz(self, params: np.ndarray) -> float:
        row_norms = np.sqrt(((self.action_scale[None, :] * params) ** 2).sum(axis=1))
        return float(np.sqrt(2.0 * self.width) * _GAUSS_SLOPE * row_norms.sum())

    def kernel_args(self, params: np.ndarray):
        return (
            _kernels.POLICY_RBF, _arr(params), self.centers, float(self.width), 0.0,
            self.state_scale, self.action_low, self.action_high,
        )


@dataclass(frozen=True)
class InvDistPolicyClass:
    """Policies pi(s) = sum_i phi_i / max(||s - anchor_i||_w, eps), clipped.

    The eps floor removes the written form's singularity at the anchors and
    is what keeps the class Lipschitz.  Two nesting schemes:

    - "cap": componentwise |phi_i| <= cap, caps increasing along the structure.
    - "tie": the trailing block phi_{untied}..phi_M is constrained equal; the
      first untied-1 rows are free.  untied=1 ties everything.
    """

    anchors: np.ndarray
    eps: float
    scheme: str               # "cap" | "tie"
    action_low: np.ndarray
    action_high: np.ndarray
    state_scale: np.ndarray
    action_scale: np.ndarray
    cap: float = 0.0
    untied: int = 1
    init_scale: float = 1.0   # sampling range for unbounded (tie) parameters

    def __post_init__(self):
        object.__setattr__(self, "anchors", _arr(np.atleast_2d(self.anchors)))
        object.__setattr__(self, "action_low", _arr(self.action_low))
        object.__setattr__(self, "action_high", _arr(self.action_high))
        object.__setattr__(self, "state_scale", _arr(self.state_scale))
        object.__setattr__(self, "action_scale", _arr(self.action_scale))
        if self.eps <= 0:
            raise ValueError("distance floor eps must be positive")
        if self.scheme not in ("cap", "tie"):
            raise ValueError(f"unknown inverse-distance scheme {self.scheme!r}")
        if self.scheme == "cap" and self.cap < 0:
            raise ValueError("magnitude cap must be nonnegative")
        if self.scheme == "tie" and not 1 <= self.untied <= self.anchors.shape[0]:
            raise ValueError("untied index must be in 1..M")

    @property
    def n_basis(self) -> int:
        return self.anchors.shape[0]

    @property
    def state_dim(self) -> int:
        return self.anchors.shape[1]

    @property
    def action_dim(self) -> int:
        return self.action_low.shape[0]

    @property
    def param_shape(self) -> tuple[int, int]:
        return (self.n_basis, self.action_dim)

    @property
    def param_scale(self) -> float:
        return self.cap if self.scheme == "cap" else self.init_scale

    def zero_params(self) -> np.ndarray:
        return np.zeros(self.param_shape)

    def contains(self, params: np.ndarray) -> bool:
        params = np.asarray(params)
        if params.shape != self.param_shape:
            return False
        if self.scheme == "cap":
            return bool((np.abs(params) <= self.cap + _FEAS_TOL).all())
        tied = params[self.untied - 1 :]
        return bool((np.abs(tied - tied[0]) <= _FEAS_TOL).all()) if tied.size else True

    def project(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if self.scheme == "cap":
            return np.clip(params, -self.cap, self.cap)
        out = params.copy()
        if self.untied - 1 < self.n_basis:
            # mean is the Euclidean projection onto the equal-rows subspace
            out[self.untied - 1 :] = params[self.untied - 1 :].mean(axis=0)
        return out

    def sample_params(self, rng: np.random.Generator) -> np.ndarray:
        if self.scheme == "cap":
            return rng.uniform(-self.cap, self.cap, self.param_shape)
        out = np.empty(self.param_shape)
        k = self.untied - 1
        out[:k] = rng.uniform(-self.init_scale, self.init_scale, (k, self.action_dim))
        tied_row = rng.uniform(-self.init_scale, self.init_scale, self.action_dim)
        out[k:] = tied_row
        return out

    def lipschitz(self, params: np.ndarray) -> float:
        row_norms = np.sqrt(((self.action_scale[None, :] * params) ** 2).sum(axis=1))
        return float(row_norms.sum() / self.eps**2)

    def kernel_args(self, params: np.ndarray):
        return (
            _kernels.POLICY_INVDIST, _arr(params), self.anchors, 0.0, float(self.eps),
            self.state_scale, self.action_low, self.action_high,
        )


PolicyClass = RbfPolicyClass | InvDistPolicyClass


@dataclass(frozen=True)
class Policy:
    """A policy class bound to a concrete parameter matrix."""

    policy_class: PolicyClass
    params: np.ndarray

    def __post_init__(self):
        p = _arr(self.params)
        if p.shape != self.policy_class.param_shape:
            raise ValueError(
                f"params shape {p.shape} does not match class {self.policy_class.param_shape}"
            )
        p.flags.writeable = False
        object.__setattr__(self, "params", p)

    def act(self, states: np.ndarray) -> np.ndarray:
        """Actions for a (B, d_S) batch; single states are promoted."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return _kernels.policy_eval_batch(*self.policy_class.kernel_args(self.params), states)

    def act1(self, state: np.ndarray) -> np.ndarray:
        return self.act(state)[0]

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return self.act1(state)

    def kernel_spec(self):
        return self.policy_class.kernel_args(self.params)

    def lipschitz(self) -> float:
        return self.policy_class.lipschitz(self.params)


def eval_rbf_policy(params: np.ndarray, cls: RbfPolicyClass, s: np.ndarray) -> np.ndarray:
    """Radial-basis policy output at one state, clipped to the action bounds."""
    if not isinstance(cls, RbfPolicyClass):
        raise TypeError("eval_rbf_policy needs an RbfPolicyClass")
    return Policy(cls, params).act1(np.asarray(s, dtype=np.float64))


def eval_invdist_policy(params: np.ndarray, cls: InvDistPolicyClass, s: np.ndarray) -> np.ndarray:
    """Inverse-distance policy output at one state, clipped to the action bounds."""
    if not isinstance(cls, InvDistPolicyClass):
        raise TypeError("eval_invdist_policy needs an InvDistPolicyClass")
    return Policy(cls, params).act1(np.asarray(s, dtype=np.float64))


def project_to_class(params: np.ndarray, cls: PolicyClass) -> np.ndarray:
    """Project parameters onto the class's feasible set (idempotent)."""
    return cls.project(params)


def policy_lipschitz(params: np.ndarray, cls: PolicyClass) -> float:
    """Upper bound on ||pi(s) - pi(s')||_A / ||s - s'||_S in the class norms."""
    return cls.lipschitz(params)


@dataclass(frozen=True)
class PolicyStructure:
    """Ordered nested sequence of policy classes, smallest first."""

    classes: tuple[PolicyClass, ...]

    def __post_init__(self):
        if len(self.classes) == 0:
            raise ValueError("structure needs at least one class")
        object.__setattr__(self, "classes", tuple(self.classes))

    def __len__(self) -> int:
        return len(self.classes)

    def __getitem__(self, k: int) -> PolicyClass:
        return self.classes[k]

    @property
    def largest(self) -> PolicyClass:
        return self.classes[-1]


def _check_nested(structure: PolicyStructure, draws: int = 8) -> None:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([20240])))
    for k in range(len(structure) - 1):
        small, big = structure[k], structure[k + 1]
        for _ in range(draws):
            p = small.sample_params(rng)
            if not big.contains(p):
                raise ValueError(f"classes {k + 1} and {k + 2} are not nested")


def build_structure(
    representation: str,
    limits,
    *,
    centers: np.ndarray,
    action_low,
    action_high,
    state_scale,
    action_scale,
    width: float | None = None,
    eps: float = 1e-3,
    scheme: str = "cap",
    init_scale: float = 1.0,
) -> PolicyStructure:
    """Build a nested structure from an ordered list of limits.

    For magnitude schemes the limits are caps on |phi| and must be strictly
    increasing; for the tying scheme they are untied counts (1 = all tied).
    Nestedness is verified constructively on random feasible draws.
    """
    limits = list(limits)
    if len(limits) == 0:
        raise ValueError("structure needs at least one limit")
    if any(b <= a for a, b in zip(limits, limits[1:])):
        raise ValueError(f"limits must be strictly increasing, got {limits}")
    centers = _arr(np.atleast_2d(centers))
    common = dict(
        action_low=_arr(action_low), action_high=_arr(action_high),
        state_scale=_arr(state_scale), action_scale=_arr(action_scale),
    )
    if representation == "rbf":
        if any(l < 0 for l in limits):
            raise ValueError("rbf magnitude limits must be nonnegative")
        if width is None:
            width = width_from_spacing(centers, common["state_scale"])
        classes = [
            RbfPolicyClass(centers=centers, width=width, limit=float(l), **common)
            for l in limits
        ]
    elif representation == "invdist":
        if scheme == "cap":
            classes = [
                InvDistPolicyClass(anchors=centers, eps=eps, scheme="cap", cap=float(l),
                                   init_scale=init_scale, **common)
                for l in limits
            ]
        elif scheme == "tie":
            if any(int(l) != l or l < 1 for l in limits):
                raise ValueError("tying limits are untied counts, integers >= 1")
            classes = [
                InvDistPolicyClass(anchors=centers, eps=eps, scheme="tie", untied=int(l),
                                   init_scale=init_scale, **common)
                for l in limits
            ]
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    else:
        raise ValueError(f"unknown representation {representation!r}")
    structure = PolicyStructure(tuple(classes))
    _check_nested(structure)
    return structure


def grid_centers(state_low, state_high, counts) -> np.ndarray:
    """Evenly spaced grid of basis centers over the state box, (prod counts, d_S)."""
    lows = np.atleast_1d(np.asarray(state_low, dtype=np.float64))
    highs = np.atleast_1d(np.asarray(state_high, dtype=np.float64))
    counts = [int(c) for c in np.atleast_1d(counts)]
    if len(counts) != lows.shape[0]:
        raise ValueError("one grid count per state dimension required")
    axes = []
    for lo, hi, c in zip(lows, highs, counts):
        if c < 1:
            raise ValueError("grid counts must be >= 1")
        axes.append(np.array([(lo + hi) / 2.0]) if c == 1 else np.linspace(lo, hi, c))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def width_from_spacing(centers: np.ndarray, state_scale: np.ndarray) -> float:
    """Shared rbf width: adjacent centers overlap at half height, c = ln2 / h^2.

    h is the smallest nonzero per-dimension center spacing in scaled units;
    a single center falls back to h = 1.
    """
    scaled = centers * state_scale[None, :]
    spacings = []
    for d in range(scaled.shape[1]):
        vals = np.unique(scaled[:, d])
        if vals.size > 1:
            spacings.append(np.min(np.diff(vals)))
    h = min(spacings) if spacings else 1.0
    return float(np.log(2.0) / h**2)


# ---------------------------------------------------------------------------
# Policy files: one header line, then the phi matrix in row-major decimal text.
# ---------------------------------------------------------------------------

def save_policy(path: str | Path, policy: Policy, class_index: int) -> None:
    cls = policy.policy_class
    if isinstance(cls, RbfPolicyClass):
        head = f"# representation=rbf,M={cls.n_basis},c={cls.width!r},k={class_index},action_dim={cls.action_dim}"
    else:
        head = f"# representation=invdist,M={cls.n_basis},eps={cls.eps!r},k={class_index},action_dim={cls.action_dim}"
    rows = [",".join("%.17g" % v for v in row) for row in policy.params]
    Path(path).write_text("\n".join([head] + rows) + "\n")


def load_policy(path: str | Path, structure: PolicyStructure) -> tuple[Policy, int]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DataFormatError(f"{path}: missing policy header")
    meta = dict(item.split("=", 1) for item in lines[0].lstrip("#").strip().split(","))
    k = int(meta["k"])
    if not 1 <= k <= len(structure):
        raise DataFormatError(f"{path}: class index {k} outside structure of size {len(structure)}")
    cls = structure[k - 1]
    rep = "rbf" if isinstance(cls, RbfPolicyClass) else "invdist"
    if meta.get("representation") != rep:
        raise DataFormatError(
            f"{path}: file representation {meta.get('representation')!r} does not match structure ({rep})"
        )
    params = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if params.shape != cls.param_shape:
        raise DataFormatError(
            f"{path}: phi shape {params.shape} does not match class shape {cls.param_shape}"
        )
    return Policy(cls, params), k
