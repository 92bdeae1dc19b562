"""State-space models and ground-truth simulation.

Discrete models follow the recursion x_k = b(x_{k-1}) + C w_k with
observations y_k = H x_k + Gamma v_k; continuous models are simulated by
Euler-Maruyama and their observations recorded as increments
dY_j = H x_j dt + Gamma sqrt(dt) eta_j so downstream filters can consume
them directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidStep, UnknownModel
from .la import EIG_TOL, SymmetricMatrix, spectral_norm
from .rng import NoiseStream

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class StateSpaceModel:
    """Drift, noise factors and observation operator of one filtering problem.

    ``drift`` must accept both a single state of shape (d,) and a stacked
    ensemble of shape (d, M).  ``lipschitz_const`` is a declared upper bound
    on the drift's Lipschitz constant; audit it with :func:`check_lipschitz`.
    """

    name: str
    flavor: str
    d: int
    q: int
    drift: Callable[[np.ndarray], np.ndarray]
    drift_matrix: np.ndarray | None
    lipschitz_const: float
    C: np.ndarray
    H: np.ndarray
    Gamma: np.ndarray
    Q: SymmetricMatrix = field(init=False)
    R: SymmetricMatrix = field(init=False)

    def __post_init__(self):
        if self.flavor not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if C.shape != (self.d, self.d):
            raise ValueError(f"C must be {self.d}x{self.d}, got {C.shape}")
        if H.shape != (self.q, self.d):
            raise ValueError(f"H must be {self.q}x{self.d}, got {H.shape}")
        if Gamma.shape != (self.q, self.q):
            raise ValueError(f"Gamma must be {self.q}x{self.q}, got {Gamma.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Gamma", Gamma)
        object.__setattr__(self, "Q", SymmetricMatrix(C @ C.T, psd=True))
        R = SymmetricMatrix(Gamma @ Gamma.T, psd=True)
        if np.linalg.eigvalsh(R.entries)[0] <= EIG_TOL:
            raise ValueError("R = Gamma Gamma^T must be strictly positive definite")
        object.__setattr__(self, "R", R)
        if self.drift_matrix is not None:
            B = np.atleast_2d(np.asarray(self.drift_matrix, dtype=float))
            if B.shape != (self.d, self.d):
                raise ValueError(f"drift matrix must be {self.d}x{self.d}, got {B.shape}")
            object.__setattr__(self, "drift_matrix", B)

    @property
    def is_linear(self) -> bool:
        return self.drift_matrix is not None


def linear_model(name, flavor, B, C, H, Gamma) -> StateSpaceModel:
    """Model with drift x -> Bx; the Lipschitz constant is the spectral norm of B."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return StateSpaceModel(
        name=name,
        flavor=flavor,
        d=B.shape[0],
        q=np.atleast_2d(np.asarray(H, dtype=float)).shape[0],
        drift=lambda x: B @ x,
        drift_matrix=B,
        lipschitz_const=spectral_norm(B),
        C=C,
        H=H,
        Gamma=Gamma,
    )


def check_lipschitz(model: StateSpaceModel, seed: int = 0, pairs: int = 1000,
                    scale: float = 5.0) -> float:
    """Largest sampled ratio |b(x)-b(y)| / (L |x-y|); valid bound iff <= 1."""
    gen = np.random.default_rng(seed)
    x = scale * gen.standard_normal((model.d, pairs))
    y = scale * gen.standard_normal((model.d, pairs))
    num = np.linalg.norm(model.drift(x) - model.drift(y), axis=0)
    den = model.lipschitz_const * np.linalg.norm(x - y, axis=0)
    return float(np.max(num / np.maximum(den, 1e-300)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray          # (K+1,) step indices or grid times
    states: np.ndarray         # (K+1, d)


@dataclass(frozen=True)
class ObservationSeries:
    times: np.ndarray          # (K,) index/time of each record
    values: np.ndarray         # (K, q); discrete: levels Y_k, continuous: increments dY_j
    kind: str                  # "levels" | "increments"

    def __post_init__(self):
        if self.kind not in ("levels", "increments"):
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if len(self.times) != len(self.values):
            raise ValueError("observation grid and record lengths differ")


def simulate_discrete(model: StateSpaceModel, x0, steps: int,
                      model_stream: NoiseStream, obs_stream: NoiseStream
                      ) -> tuple[Trajectory, ObservationSeries]:
    """Reference trajectory and observation record of the discrete recursion.

    Observations start at k = 1, matching the forecast/analysis cycle; no
    y_0 is generated.
    """
    if model.flavor != DISCRETE:
        raise ValueError("simulate_discrete requires a discrete-flavor model")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x0, dtype=float).reshape(model.d)
    states = np.empty((steps + 1, model.d))
    obs = np.empty((steps, model.q))
    states[0] = x
    for k in range(1, steps + 1):
        w = model_stream.normals(k, model.d)
        v = obs_stream.normals(k, model.q)
        x = model.drift(x) + model.C @ w
        states[k] = x
        obs[k - 1] = model.H @ x + model.Gamma @ v
    return (
        Trajectory(times=np.arange(steps + 1, dtype=float), states=states),
        ObservationSeries(times=np.arange(1, steps + 1, dtype=float), values=obs,
                          kind="levels"),
    )


def simulate_continuous(model: StateSpaceModel, x0, horizon: float, dt: float,
                        model_stream: NoiseStream, obs_stream: NoiseStream
                        ) -> tuple[Trajectory, ObservationSeries]:
    """Euler-Maruyama path of the continuous model plus observation increments.

    Each increment dY_j is accrued from the state at the start of interval j.
    """
    if model.flavor != CONTINUOUS:
        raise ValueError("simulate_continuous requires a continuous-flavor model")
    if dt <= 0.0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise InvalidStep(f"horizon {horizon} is not an integer multiple of dt {dt}")
    sq = np.sqrt(dt)
    x = np.asarray(x0, dtype=float).reshape(model.d)
    states = np.empty((n_steps + 1, model.d))
    incs = np.empty((n_steps, model.q))
    states[0] = x
    for j in range(n_steps):
        xi = model_stream.normals(j, model.d)
        eta = obs_stream.normals(j, model.q)
        incs[j] = model.H @ x * dt + model.Gamma @ eta * sq
        x = x + model.drift(x) * dt + model.C @ xi * sq
        states[j + 1] = x
    times = dt * np.arange(n_steps + 1)
    return (
        Trajectory(times=times, states=states),
        ObservationSeries(times=times[:-1], values=incs, kind="increments"),
    )


# --- builtin catalog ---------------------------------------------------------
#
# All builtins keep the drift globally Lipschitz; the nonlinear entry uses a
# tanh saturation instead of a chaotic system for exactly that reason.

_VEC3_B_DISCRETE = np.array([
    [0.60, 0.15, 0.00],
    [0.00, 0.50, 0.20],
    [0.10, 0.00, 0.40],
])
_VEC3_B_CONTINUOUS = np.array([
    [-0.50, 0.15, 0.00],
    [0.00, -0.40, 0.20],
    [0.10, 0.00, -0.60],
])
_VEC3_C = np.array([
    [0.50, 0.00, 0.00],
    [0.10, 0.40, 0.00],
    [0.00, 0.10, 0.30],
])
_VEC3_H = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 1.0],
])
_VEC3_GAMMA = np.diag([0.5, 0.7])

_TANH_A_DISCRETE = np.array([
    [0.40, 0.10, 0.00],
    [0.00, 0.35, 0.10],
    [0.05, 0.00, 0.30],
])
_TANH_A_CONTINUOUS = np.array([
    [-0.60, 0.20, 0.00],
    [-0.20, -0.50, 0.10],
    [0.00, -0.10, -0.40],
])
_TANH_GAIN = {DISCRETE: 0.25, CONTINUOUS: 0.20}

BUILTIN_NAMES = ("scalar-linear", "vec3-linear", "tanh-nonlinear")


def _tanh_model(flavor: str) -> StateSpaceModel:
    A = _TANH_A_DISCRETE if flavor == DISCRETE else _TANH_A_CONTINUOUS
    a = _TANH_GAIN[flavor]
    # tanh is 1-Lipschitz per coordinate, so L = |A| + a is a global bound
    return StateSpaceModel(
        name="tanh-nonlinear",
        flavor=flavor,
        d=3,
        q=2,
        drift=lambda x: A @ x + a * np.tanh(x),
        drift_matrix=None,
        lipschitz_const=spectral_norm(A) + a,
        C=_VEC3_C,
        H=_VEC3_H,
        Gamma=_VEC3_GAMMA,
    )


def builtin_model(name: str, flavor: str = DISCRETE) -> StateSpaceModel:
    """Fully parameterized builtin model by name and time flavor."""
    if flavor not in (DISCRETE, CONTINUOUS):
        raise UnknownModel(f"unknown flavor {flavor!r}")
    if name == "scalar-linear":
        B = [[0.9]] if flavor == DISCRETE else [[-0.5]]
        return linear_model("scalar-linear", flavor, B, [[1.0]], [[1.0]], [[1.0]])
    if name == "vec3-linear":
        B = _VEC3_B_DISCRETE if flavor == DISCRETE else _VEC3_B_CONTINUOUS
        return linear_model("vec3-linear", flavor, B, _VEC3_C, _VEC3_H, _VEC3_GAMMA)
    if name == "tanh-nonlinear":
        return _tanh_model(flavor)
    raise UnknownModel(f"no builtin model named {name!r}; choose from {BUILTIN_NAMES}")


def builtin_models() -> dict[str, dict[str, StateSpaceModel]]:
    """Catalog of every builtin model in both time flavors."""
    return {
        name: {flavor: builtin_model(name, flavor) for flavor in (DISCRETE, CONTINUOUS)}
        for name in BUILTIN_NAMES
    }


def trajectory_rows(traj: Trajectory, obs: ObservationSeries):
    """Yield CSV rows (header first) pairing states with their observations."""
    d = traj.states.shape[1]
    q = obs.values.shape[1]
    prefix = "y" if obs.kind == "levels" else "dy"
    yield ["step_or_time"] + [f"x_{i+1}" for i in range(d)] + [f"{prefix}_{j+1}" for j in range(q)]
    obs_at = {float(t): row for t, row in zip(obs.times, obs.values)}
    for t, state in zip(traj.times, traj.states):
        row = [float(t)] + [float(v) for v in state]
        rec = obs_at.get(float(t))
        row += [float(v) for v in rec] if rec is not None else [""] * q
        yield row
