"""Optimizer iterations and instrumented trajectory runs.

Three update rules share one interface: plain gradient descent,
momentum with a tunable lookahead coefficient sigma (sigma=0 is the
heavy-ball method, sigma=g is the usual Nesterov acceleration, larger
sigma looks several estimated steps ahead), and the RMSProp version of
the same lookahead.  `run_trajectory` executes a rule for a fixed
number of steps and records iterates, losses and distance to the
minimum, labelling the run completed / diverged / trapped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .landscapes import Landscape
from .serialize import fmt_float

PLAIN_GD = "plain_gd"
MOMENTUM_SUPERACCEL = "momentum_superaccel"
RMSPROP_SUPERACCEL = "rmsprop_superaccel"
_VARIANTS = (PLAIN_GD, MOMENTUM_SUPERACCEL, RMSPROP_SUPERACCEL)

DIVERGENCE_THRESHOLD = 1e8
TRAP_WINDOW = 50
TRAP_MAX_DISTINCT = 4
TRAP_POINT_TOL = 1e-9
TRAP_GRAD_MIN = 1e-4


class NonFiniteError(RuntimeError):
    """An update produced a non-finite parameter component."""


def alpha_of(g: float, k_eta: float, sigma: float) -> float:
    """Combination alpha = g - k_eta*sigma - 1 governing the 1-D dynamics."""
    return g - k_eta * sigma - 1.0


@dataclass(frozen=True)
class SigmaSchedule:
    """Linear decay of sigma over a fixed number of steps.

    linear mode: sigma(i) = sigma_start + (sigma_end - sigma_start) *
    min(i / decay_steps, 1); constant mode pins sigma_start.
    """

    sigma_start: float
    sigma_end: float
    decay_steps: int
    mode: str = "linear"

    def __post_init__(self) -> None:
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be a positive integer")
        if self.mode not in ("linear", "constant"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    def sigma_at(self, i: int) -> float:
        if self.mode == "constant":
            return self.sigma_start
        frac = min(i / self.decay_steps, 1.0)
        return self.sigma_start + (self.sigma_end - self.sigma_start) * frac


@dataclass(frozen=True)
class OptimConfig:
    """Hyperparameters of one optimizer run."""

    eta: float
    g: float = 0.9
    sigma: float = 0.0
    variant: str = MOMENTUM_SUPERACCEL
    beta2: float = 0.999
    epsilon: float = 1e-7
    schedule: Optional[SigmaSchedule] = None

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 <= self.g < 1.0:
            raise ValueError("g must lie in [0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def sigma_at(self, i: int) -> float:
        if self.schedule is not None and self.variant != PLAIN_GD:
            return self.schedule.sigma_at(i)
        return self.sigma


@dataclass(frozen=True)
class OptimState:
    """Evolving state: parameters, momentum and second-moment accumulators."""

    theta: np.ndarray
    m: np.ndarray
    r: np.ndarray
    iter: int = 0

    @classmethod
    def initial(cls, theta0) -> "OptimState":
        theta = np.asarray(theta0, dtype=float).copy()
        return cls(theta=theta, m=np.zeros_like(theta), r=np.zeros_like(theta), iter=0)


def _check_finite(theta: np.ndarray) -> None:
    if not np.all(np.isfinite(theta)):
        raise NonFiniteError("parameter update produced a non-finite component")


def step_gd(state: OptimState, landscape: Landscape, config: OptimConfig) -> OptimState:
    """theta' = theta - eta * grad(theta); momentum buffers untouched."""
    grad = landscape.gradient(state.theta)
    with np.errstate(over="ignore", invalid="ignore"):
        theta = state.theta - config.eta * grad
    _check_finite(theta)
    return OptimState(theta=theta, m=state.m, r=state.r, iter=state.iter + 1)


def step_superaccel(
    state: OptimState, landscape: Landscape, config: OptimConfig
) -> OptimState:
    """m' = g*m - eta*grad(theta + sigma*m); theta' = theta + m'."""
    sigma = config.sigma_at(state.iter)
    grad = landscape.gradient(state.theta + sigma * state.m)
    with np.errstate(over="ignore", invalid="ignore"):
        m = config.g * state.m - config.eta * grad
        theta = state.theta + m
    _check_finite(theta)
    return OptimState(theta=theta, m=m, r=state.r, iter=state.iter + 1)


def step_rmsprop_superaccel(
    state: OptimState, landscape: Landscape, config: OptimConfig
) -> OptimState:
    """RMSProp with lookahead; all squaring/rooting/division component-wise.

    r' = beta2*r + (1-beta2)*grad^2
    m' = g*m - eta / sqrt(r' + epsilon) * grad      (epsilon inside the root)
    theta' = theta + m'
    with grad evaluated at theta + sigma*m.
    """
    sigma = config.sigma_at(state.iter)
    grad = landscape.gradient(state.theta + sigma * state.m)
    with np.errstate(over="ignore", invalid="ignore"):
        r = config.beta2 * state.r + (1.0 - config.beta2) * grad * grad
        m = config.g * state.m - (config.eta / np.sqrt(r + config.epsilon)) * grad
        theta = state.theta + m
    _check_finite(theta)
    return OptimState(theta=theta, m=m, r=r, iter=state.iter + 1)


_STEPPERS = {
    PLAIN_GD: step_gd,
    MOMENTUM_SUPERACCEL: step_superaccel,
    RMSPROP_SUPERACCEL: step_rmsprop_superaccel,
}


def step(state: OptimState, landscape: Landscape, config: OptimConfig) -> OptimState:
    """One update of the configured variant."""
    return _STEPPERS[config.variant](state, landscape, config)


TERMINATED_COMPLETED = "completed"
TERMINATED_DIVERGED = "diverged"
TERMINATED_TRAPPED = "trapped"


@dataclass
class Trajectory:
    """Per-iteration record of one optimizer run."""

    iters: np.ndarray  # (n,)
    thetas: np.ndarray  # (n, dim)
    losses: np.ndarray  # (n,)
    dists: np.ndarray  # (n,) Euclidean distance to minimum_hint (nan if unknown)
    terminated: str
    config: OptimConfig
    landscape_name: str = ""

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def steps_recorded(self) -> int:
        return len(self.iters) - 1

    def to_csv(self, path) -> None:
        header = ["iter"] + [f"theta_{j}" for j in range(self.dim)] + ["loss", "dist"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(len(self.iters)):
                cells = [str(int(self.iters[i]))]
                cells += [fmt_float(v) for v in self.thetas[i]]
                cells.append(fmt_float(self.losses[i]))
                cells.append(fmt_float(self.dists[i]))
                fh.write(",".join(cells) + "\n")


def config_to_dict(config: OptimConfig) -> dict:
    out = {
        "eta": config.eta,
        "g": config.g,
        "sigma": config.sigma,
        "variant": config.variant,
        "beta2": config.beta2,
        "epsilon": config.epsilon,
    }
    if config.schedule is not None:
        out["schedule"] = {
            "sigma_start": config.schedule.sigma_start,
            "sigma_end": config.schedule.sigma_end,
            "decay_steps": config.schedule.decay_steps,
            "mode": config.schedule.mode,
        }
    return out


def config_from_dict(d: dict) -> OptimConfig:
    schedule = None
    if d.get("schedule") is not None:
        schedule = SigmaSchedule(**d["schedule"])
    return OptimConfig(
        eta=d["eta"],
        g=d.get("g", 0.9),
        sigma=d.get("sigma", 0.0),
        variant=d.get("variant", MOMENTUM_SUPERACCEL),
        beta2=d.get("beta2", 0.999),
        epsilon=d.get("epsilon", 1e-7),
        schedule=schedule,
    )


def _distinct_points(points: np.ndarray, tol: float) -> list[np.ndarray]:
    reps: list[np.ndarray] = []
    for p in points:
        if not any(np.max(np.abs(p - r)) <= tol for r in reps):
            reps.append(p)
    return reps


def _is_trapped(landscape: Landscape, thetas: np.ndarray) -> bool:
    """Final-window cycle detector: few distinct revisited points, all
    with a clearly nonzero gradient (so convergence does not count)."""
    if len(thetas) < TRAP_WINDOW:
        return False
    window = thetas[-TRAP_WINDOW:]
    reps = _distinct_points(window, TRAP_POINT_TOL)
    if len(reps) > TRAP_MAX_DISTINCT:
        return False
    return all(
        np.max(np.abs(landscape.gradient(r))) > TRAP_GRAD_MIN for r in reps
    )


def run_trajectory(
    landscape: Landscape, config: OptimConfig, theta0, steps: int
) -> Trajectory:
    """Run `steps` updates from zero-initialized m, r and record every iterate.

    Termination labels: `diverged` when an update is non-finite or any
    component exceeds 1e8 in magnitude (recording stops there),
    `trapped` when the final window cycles through a few distinct
    non-stationary points, otherwise `completed`.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (landscape.dim,):
        raise ValueError(
            f"theta0 has shape {theta0.shape}, landscape needs ({landscape.dim},)"
        )
    if steps < 1:
        raise ValueError("steps must be a positive integer")

    state = OptimState.initial(theta0)
    hint = landscape.minimum_hint

    iters = [0]
    thetas = [state.theta.copy()]
    losses = [landscape.value(state.theta)]
    dists = [
        float(np.linalg.norm(state.theta - hint)) if hint is not None else float("nan")
    ]
    terminated = TERMINATED_COMPLETED
    for _ in range(steps):
        try:
            state = step(state, landscape, config)
        except NonFiniteError:
            terminated = TERMINATED_DIVERGED
            break
        iters.append(state.iter)
        thetas.append(state.theta.copy())
        losses.append(landscape.value(state.theta))
        dists.append(
            float(np.linalg.norm(state.theta - hint))
            if hint is not None
            else float("nan")
        )
        if np.max(np.abs(state.theta)) > DIVERGENCE_THRESHOLD:
            terminated = TERMINATED_DIVERGED
            break

    thetas_arr = np.array(thetas)
    if terminated == TERMINATED_COMPLETED and _is_trapped(landscape, thetas_arr):
        terminated = TERMINATED_TRAPPED

    return Trajectory(
        iters=np.array(iters),
        thetas=thetas_arr,
        losses=np.array(losses),
        dists=np.array(dists),
        terminated=terminated,
        config=config,
        landscape_name=landscape.name,
    )


def run_parabola_alpha_form(
    k_eta: float, g: float, sigma: float, theta0: float = 1.0, steps: int = 500
) -> np.ndarray:
    """Cross-check runner for the 1-D parabola in the alpha form.

    Uses m' = (1+alpha)*m - k_eta*theta with alpha = g - k_eta*sigma - 1,
    an algebraic rearrangement of the lookahead update specialized to
    the parabola.  Returns the theta sequence (steps+1 values).
    """
    alpha = alpha_of(g, k_eta, sigma)
    theta = float(theta0)
    m = 0.0
    out = [theta]
    for _ in range(steps):
        m = (1.0 + alpha) * m - k_eta * theta
        theta = theta + m
        out.append(theta)
    return np.array(out)
