"""Timescale extraction from trajectories and sigma sweeps.

The decay of theta^(i) toward the minimum is summarized by a relaxation
timescale T: oscillatory runs are fitted with
amplitude * exp(-t/T) * cos(omega_bar*t + delta) (damped Gauss-Newton),
non-oscillatory runs with a straight-line fit to log|x|.  Sweeping
sigma over a grid and refining the interior minimum of T(sigma) by
golden-section search yields the empirically optimal sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .landscapes import parabola
from .optim import (
    MOMENTUM_SUPERACCEL,
    RMSPROP_SUPERACCEL,
    OptimConfig,
    Trajectory,
    run_trajectory,
)

METHOD_DAMPED_COSINE = "damped_cosine"
METHOD_ENVELOPE = "envelope"
METHOD_SKIPPED = "skipped"

_GN_MAX_ITER = 500
_GN_PARAM_TOL = 1e-10
_GN_MAX_HALVINGS = 30
_MIN_SAMPLES_COSINE = 20
_MIN_SAMPLES_ENVELOPE = 10
_MIN_PEAKS = 3

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateSeriesError(ValueError):
    """The series cannot support the requested fit."""


@dataclass(frozen=True)
class FitResult:
    """Fitted relaxation parameters for one series.

    omega_bar == 0 marks a pure-exponential (non-oscillatory) fit.
    """

    T: float
    omega_bar: float
    delta: float
    amplitude: float
    rmse: float
    converged: bool
    method: str


def _not_converged(method: str) -> FitResult:
    return FitResult(
        T=float("nan"),
        omega_bar=float("nan"),
        delta=float("nan"),
        amplitude=float("nan"),
        rmse=float("nan"),
        converged=False,
        method=method,
    )


def _model(params: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, big_t, w, d = params
    return a * np.exp(-t / big_t) * np.cos(w * t + d)


def _jacobian(params: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, big_t, w, d = params
    env = np.exp(-t / big_t)
    cos_term = np.cos(w * t + d)
    sin_term = np.sin(w * t + d)
    jac = np.empty((len(t), 4))
    jac[:, 0] = env * cos_term
    jac[:, 1] = a * env * (t / (big_t * big_t)) * cos_term
    jac[:, 2] = -a * env * t * sin_term
    jac[:, 3] = -a * env * sin_term
    return jac


def _wrap_angle(d: float) -> float:
    """Wrap to (-pi, pi]."""
    d = math.fmod(d, 2.0 * math.pi)
    if d <= -math.pi:
        d += 2.0 * math.pi
    elif d > math.pi:
        d -= 2.0 * math.pi
    return d


def _canonicalize(params: np.ndarray) -> np.ndarray:
    a, big_t, w, d = params
    if w < 0:
        w, d = -w, -d
    if a < 0:
        a, d = -a, d + math.pi
    return np.array([a, big_t, w, _wrap_angle(d)])


def _refine_damped_cosine(params: np.ndarray, t: np.ndarray, x: np.ndarray):
    """Damped Gauss-Newton on (amplitude, T, omega_bar, delta).

    Full steps are halved (at most 30 times) until the residual
    decreases; iteration stops when the relative parameter change drops
    below 1e-10 or after 500 iterations.  Returns (params, sse).
    """
    resid = x - _model(params, t)
    sse = float(resid @ resid)
    for _ in range(_GN_MAX_ITER):
        jac = _jacobian(params, t)
        jtj = jac.T @ jac
        jtr = jac.T @ resid
        try:
            delta_p = np.linalg.solve(jtj, jtr)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(delta_p)):
            break
        lam = 1.0
        accepted = False
        step_norm = 0.0
        for _ in range(_GN_MAX_HALVINGS):
            cand = params + lam * delta_p
            if cand[1] > 0 and np.all(np.isfinite(cand)):
                cand_resid = x - _model(cand, t)
                cand_sse = float(cand_resid @ cand_resid)
                if cand_sse < sse:
                    step_norm = float(np.linalg.norm(lam * delta_p))
                    params, resid, sse = cand, cand_resid, cand_sse
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
        if step_norm <= _GN_PARAM_TOL * (float(np.linalg.norm(params)) + 1e-300):
            break
    return params, sse


def _log_envelope_line(t: np.ndarray, absx: np.ndarray):
    """Least-squares slope/intercept of log|x| against t."""
    logx = np.log(absx)
    n = len(t)
    tm = t.mean()
    lm = logx.mean()
    denom = np.sum((t - tm) ** 2)
    if denom == 0:
        return 0.0, lm
    slope = float(np.sum((t - tm) * (logx - lm)) / denom)
    intercept = float(lm - slope * tm)
    return slope, intercept


def fit_damped_cosine(t, x) -> FitResult:
    """Least-squares fit of amplitude*exp(-t/T)*cos(omega_bar*t+delta).

    Initialization: T and amplitude from a straight-line fit to the log
    of the peak envelope (strict local maxima of |x|, at least 3), the
    frequency from pi over the mean half-period between sign changes,
    and the phase from a four-point grid.  Each start is refined by
    damped Gauss-Newton until the relative parameter change drops below
    1e-10 (at most 500 iterations); the best residual wins.

    Returns converged=False when the series has fewer than two sign
    changes (non-oscillatory: use the envelope fit instead) or when
    initialization/refinement cannot proceed.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(t) < _MIN_SAMPLES_COSINE:
        raise DegenerateSeriesError(
            f"need at least {_MIN_SAMPLES_COSINE} samples, got {len(t)}"
        )
    if not np.any(x != 0.0):
        raise DegenerateSeriesError("series is identically zero")

    # Initialization window: drop the tail once it falls to the noise
    # level (10x the median magnitude of the last tenth of the series),
    # otherwise spurious crossings/peaks corrupt the starting values.
    # The Gauss-Newton refinement below still fits every sample.
    absx = np.abs(x)
    tail = absx[-max(1, len(absx) // 10) :]
    floor = min(10.0 * float(np.median(tail)), float(absx.max()) / 50.0)
    above = np.nonzero(absx >= floor)[0]
    end = int(above[-1]) + 1 if len(above) else len(x)
    ti, xi = t[:end], x[:end]

    sign_change = np.nonzero(xi[:-1] * xi[1:] < 0.0)[0]
    if len(sign_change) < 2:
        return _not_converged(METHOD_DAMPED_COSINE)

    # Frequency init: mean half-period between zero-crossing midpoints.
    crossing_times = 0.5 * (ti[sign_change] + ti[sign_change + 1])
    half_period = float(np.mean(np.diff(crossing_times)))
    if half_period <= 0:
        return _not_converged(METHOD_DAMPED_COSINE)
    w0 = math.pi / half_period

    # Envelope init from strict local maxima of |x|.
    absxi = absx[:end]
    peak_idx = (
        np.nonzero((absxi[1:-1] > absxi[:-2]) & (absxi[1:-1] > absxi[2:]))[0] + 1
    )
    peak_idx = peak_idx[absxi[peak_idx] > 0]
    if len(peak_idx) < _MIN_PEAKS:
        return _not_converged(METHOD_DAMPED_COSINE)
    slope, intercept = _log_envelope_line(ti[peak_idx], absxi[peak_idx])
    if slope >= 0:
        return _not_converged(METHOD_DAMPED_COSINE)
    a0, t0 = math.exp(intercept), -1.0 / slope

    # The delta=0 start can sit outside the right basin when the true
    # phase is near +-pi/2; a four-point phase grid covers all basins.
    best_params = None
    best_sse = math.inf
    for d0 in (0.0, 0.5 * math.pi, -0.5 * math.pi, math.pi):
        params, sse = _refine_damped_cosine(np.array([a0, t0, w0, d0]), t, x)
        if sse < best_sse:
            best_params, best_sse = params, sse
    params, sse = best_params, best_sse

    params = _canonicalize(params)
    rmse = math.sqrt(sse / len(t))
    converged = bool(
        np.all(np.isfinite(params)) and params[1] > 0 and math.isfinite(rmse)
    )
    if not converged:
        return _not_converged(METHOD_DAMPED_COSINE)
    return FitResult(
        T=float(params[1]),
        omega_bar=float(params[2]),
        delta=float(params[3]),
        amplitude=float(params[0]),
        rmse=rmse,
        converged=True,
        method=METHOD_DAMPED_COSINE,
    )


def fit_exponential_envelope(t, x) -> FitResult:
    """Straight-line least squares on (t, log|x|); T = -1/slope.

    Samples with |x| below 1e-300 are skipped.  A non-decaying fit
    (slope >= 0) reports T = +inf with converged=False.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    mask = np.abs(x) >= 1e-300
    if int(mask.sum()) < _MIN_SAMPLES_ENVELOPE:
        raise DegenerateSeriesError(
            f"need at least {_MIN_SAMPLES_ENVELOPE} nonzero samples, got {int(mask.sum())}"
        )
    tt = t[mask]
    ax = np.abs(x[mask])
    slope, intercept = _log_envelope_line(tt, ax)
    amplitude = math.exp(intercept)
    if slope >= 0:
        return FitResult(
            T=float("inf"),
            omega_bar=0.0,
            delta=0.0,
            amplitude=amplitude,
            rmse=float("nan"),
            converged=False,
            method=METHOD_ENVELOPE,
        )
    big_t = -1.0 / slope
    resid = ax - amplitude * np.exp(-tt / big_t)
    rmse = math.sqrt(float(resid @ resid) / len(tt))
    return FitResult(
        T=big_t,
        omega_bar=0.0,
        delta=0.0,
        amplitude=amplitude,
        rmse=rmse,
        converged=True,
        method=METHOD_ENVELOPE,
    )


def extract_timescale(traj: Trajectory, mode: str = "auto") -> FitResult:
    """Timescale of a completed 1-D trajectory.

    `auto` tries the damped-cosine fit and falls back to the envelope
    fit when the series is non-oscillatory.
    """
    if traj.terminated == "diverged":
        raise ValueError("cannot extract a timescale from a diverged trajectory")
    if traj.dim != 1:
        raise ValueError("timescale extraction is defined for 1-D trajectories")
    t = traj.iters.astype(float)
    x = traj.thetas[:, 0]
    if mode == "oscillatory":
        return fit_damped_cosine(t, x)
    if mode == "envelope":
        return fit_exponential_envelope(t, x)
    if mode != "auto":
        raise ValueError(f"unknown fit mode {mode!r}")
    fit = fit_damped_cosine(t, x)
    if fit.converged:
        return fit
    return fit_exponential_envelope(t, x)


@dataclass(frozen=True)
class SigmaScan:
    """T(sigma) over a grid, with the refined interior minimum if any.

    sigma_star is present iff the grid has an interior minimum whose
    neighbors both exceed it by the 1% significance factor; otherwise
    well_defined is False (the regime where sigma stops mattering).
    """

    sigma_grid: np.ndarray
    timescales: np.ndarray  # nan where the fit failed
    methods: tuple
    sigma_star: Optional[float]
    well_defined: bool
    k_eta: float
    g: float


_INTERIOR_MIN_FACTOR = 1.01


def sweep_steps(k_eta: float) -> int:
    """Trajectory length for sweeps: several decay constants of data."""
    return int(max(800, math.ceil(50.0 / math.sqrt(k_eta))))


def _timescale_at(
    sigma: float,
    landscape,
    steps: int,
    make_config,
    mode: str,
) -> tuple[float, str]:
    config = make_config(sigma)
    traj = run_trajectory(landscape, config, np.array([1.0]), steps)
    if traj.terminated == "diverged":
        return float("nan"), METHOD_SKIPPED
    try:
        fit = extract_timescale(traj, mode)
    except DegenerateSeriesError:
        return float("nan"), METHOD_SKIPPED
    if not fit.converged or not math.isfinite(fit.T):
        return float("nan"), METHOD_SKIPPED
    return fit.T, fit.method


def _golden_section(func, lo: float, hi: float, width: float = 1e-3) -> float:
    """Golden-section minimizer on [lo, hi]; returns the midpoint of the
    final bracket.  Non-finite evaluations are treated as +inf."""

    def safe(s: float) -> float:
        v = func(s)
        return v if math.isfinite(v) else float("inf")

    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = safe(c), safe(d)
    while (b - a) > width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = safe(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = safe(d)
    return 0.5 * (a + b)


def _scan(
    landscape,
    make_config,
    sigma_min: float,
    sigma_max: float,
    n_grid: int,
    steps: int,
    mode: str,
    k_eta: float,
    g: float,
) -> SigmaScan:
    if not sigma_min < sigma_max:
        raise ValueError("sigma_min must be below sigma_max")
    if n_grid < 8:
        raise ValueError("n_grid must be at least 8")
    grid = np.linspace(sigma_min, sigma_max, n_grid)
    timescales = np.empty(n_grid)
    methods = []
    for i, sigma in enumerate(grid):
        big_t, method = _timescale_at(float(sigma), landscape, steps, make_config, mode)
        timescales[i] = big_t
        methods.append(method)

    best: Optional[int] = None
    for i in range(1, n_grid - 1):
        ti = timescales[i]
        if not math.isfinite(ti):
            continue
        left, right = timescales[i - 1], timescales[i + 1]
        if not (math.isfinite(left) and math.isfinite(right)):
            continue
        if left >= _INTERIOR_MIN_FACTOR * ti and right >= _INTERIOR_MIN_FACTOR * ti:
            if best is None or ti < timescales[best]:
                best = i

    if best is None:
        return SigmaScan(
            sigma_grid=grid,
            timescales=timescales,
            methods=tuple(methods),
            sigma_star=None,
            well_defined=False,
            k_eta=k_eta,
            g=g,
        )

    def t_of(sigma: float) -> float:
        return _timescale_at(sigma, landscape, steps, make_config, mode)[0]

    sigma_star = _golden_section(t_of, float(grid[best - 1]), float(grid[best + 1]))
    return SigmaScan(
        sigma_grid=grid,
        timescales=timescales,
        methods=tuple(methods),
        sigma_star=sigma_star,
        well_defined=True,
        k_eta=k_eta,
        g=g,
    )


def find_sigma_star_numeric(
    k_eta: float,
    g: float = 0.9,
    sigma_min: float = 0.5,
    sigma_max: float = 15.0,
    n_grid: int = 24,
) -> SigmaScan:
    """Empirical optimal sigma on the parabola at the given k_eta.

    Runs one trajectory per grid sigma from theta0 = 1, extracts T for
    each (auto fit), then refines the interior grid minimum by
    golden-section search to a bracket width of 1e-3.
    """
    if k_eta <= 0:
        raise ValueError("k_eta must be positive")
    landscape = parabola(k_eta)
    steps = sweep_steps(k_eta)

    def make_config(sigma: float) -> OptimConfig:
        return OptimConfig(eta=1.0, g=g, sigma=sigma, variant=MOMENTUM_SUPERACCEL)

    return _scan(
        landscape,
        make_config,
        sigma_min,
        sigma_max,
        n_grid,
        steps,
        "auto",
        k_eta=k_eta,
        g=g,
    )


def rmsprop_sigma_star_scan(
    eta_grid,
    k: float = 1.0,
    g: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-7,
    sigma_min: float = 0.5,
    sigma_max: float = 30.0,
    n_grid: int = 24,
) -> list[tuple[float, SigmaScan]]:
    """Optimal sigma of the RMSProp lookahead rule per learning rate.

    Same sweep machinery as the non-adaptive scan but stepping the
    RMSProp variant and always using the envelope fit (the damped
    cosine does not describe the adaptive dynamics quantitatively).
    Per-eta failures leave nan timescales; the scan continues.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    landscape = parabola(k)
    out: list[tuple[float, SigmaScan]] = []
    for eta in eta_grid:
        eta = float(eta)
        if eta <= 0:
            raise ValueError("all learning rates must be positive")
        steps = sweep_steps(k * eta)

        def make_config(sigma: float, _eta=eta) -> OptimConfig:
            return OptimConfig(
                eta=_eta,
                g=g,
                sigma=sigma,
                variant=RMSPROP_SUPERACCEL,
                beta2=beta2,
                epsilon=epsilon,
            )

        scan = _scan(
            landscape,
            make_config,
            sigma_min,
            sigma_max,
            n_grid,
            steps,
            "envelope",
            k_eta=k * eta,
            g=g,
        )
        out.append((eta, scan))
    return out
