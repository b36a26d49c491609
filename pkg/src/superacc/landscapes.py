"""Objective functions with hand-coded analytic gradients.

Three landscape families are provided: the 1-D parabola 0.5*k*theta^2,
a 2-D non-convex valley function, and the mean-squared-error loss of a
linear regression on a synthetic dataset.  Each landscape carries its
dimension, value and gradient callables, and (when known) the location
of its minimum.  A central-difference gradient oracle and a cyclic
Jacobi eigensolver for the regression Hessian live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .rng import SplitMix64
from .serialize import fmt_float


class NonConvergenceError(RuntimeError):
    """Raised when an iterative search exhausts its iteration budget."""


@dataclass(frozen=True)
class Landscape:
    """A differentiable scalar objective.

    `value` maps a point of length `dim` to a float; `gradient` maps it
    to a length-`dim` array.  `minimum_hint` is the known or numerically
    located minimizer, used for distance-to-minimum observables.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    minimum_hint: Optional[np.ndarray] = None
    name: str = ""


@dataclass(frozen=True)
class LinRegDataset:
    """Synthetic regression data: features uniform in (0,1), cubic targets.

    targets[i] = sum_alpha (features[i, alpha] / n_features)^3, noiseless.
    """

    features: np.ndarray  # (n_data, n_features)
    targets: np.ndarray  # (n_data,)
    seed: int

    @property
    def n_data(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def to_csv(self, path) -> None:
        """Write the dataset as CSV (columns x_1..x_Nf, y; 17 significant digits)."""
        header = [f"x_{a + 1}" for a in range(self.n_features)] + ["y"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(self.n_data):
                row = [fmt_float(v) for v in self.features[i]]
                row.append(fmt_float(self.targets[i]))
                fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of the (constant) regression Hessian, ascending."""

    eigenvalues: np.ndarray
    kappa_min: float
    kappa_max: float


def parabola(k: float) -> Landscape:
    """1-D parabola 0.5*k*theta^2 with gradient k*theta."""
    if k <= 0:
        raise ValueError(f"curvature k must be positive, got {k}")

    def value(theta: np.ndarray) -> float:
        return float(0.5 * k * theta[0] * theta[0])

    def gradient(theta: np.ndarray) -> np.ndarray:
        return np.array([k * theta[0]])

    return Landscape(
        dim=1,
        value=value,
        gradient=gradient,
        minimum_hint=np.zeros(1),
        name=f"parabola(k={k:g})",
    )


def _synth2d_value(theta: np.ndarray) -> float:
    t1, t2 = theta[0], theta[1]
    p = t1 * t1 + 2.0 * t2 - 7.0
    q = 2.0 * t1 + t2 - 5.0
    return float(p * p + q * q + 1e-3 * (t1 ** 6 + t2 ** 6))


def _synth2d_gradient(theta: np.ndarray) -> np.ndarray:
    t1, t2 = theta[0], theta[1]
    p = t1 * t1 + 2.0 * t2 - 7.0
    q = 2.0 * t1 + t2 - 5.0
    g1 = 4.0 * p * t1 + 4.0 * q + 6e-3 * t1 ** 5
    g2 = 4.0 * p + 2.0 * q + 6e-3 * t2 ** 5
    return np.array([g1, g2])


_synth2d_minimum: Optional[np.ndarray] = None


def synth2d() -> Landscape:
    """2-D valley landscape (theta1^2+2*theta2-7)^2 + (2*theta1+theta2-5)^2 + 1e-3*(theta1^6+theta2^6).

    The sixth-power term keeps the function coercive so that descent
    cannot escape to infinity.  The minimum (~(1.690, 1.963)) is located
    numerically once and cached.
    """
    global _synth2d_minimum
    base = Landscape(
        dim=2,
        value=_synth2d_value,
        gradient=_synth2d_gradient,
        minimum_hint=None,
        name="synth2d",
    )
    if _synth2d_minimum is None:
        _synth2d_minimum = locate_minimum(base, np.array([1.0, 2.0]), tol=1e-10)
    return replace(base, minimum_hint=_synth2d_minimum)


def locate_minimum(
    landscape: Landscape,
    start,
    tol: float = 1e-10,
    max_iter: int = 10 ** 6,
    step0: float = 0.01,
) -> np.ndarray:
    """Find a point with gradient sup-norm below `tol` by adaptive descent.

    Gradient steps with step-halving on rejection and modest growth on
    acceptance; deterministic, no linear algebra.  A step is accepted
    when it lowers the loss or, failing that (the loss saturates at ~1
    ulp while the gradient still has orders of magnitude to go), when
    it lowers the gradient 2-norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(start, dtype=float).copy()
    fx = landscape.value(x)
    g = landscape.gradient(x)
    gnorm = float(np.linalg.norm(g))
    step = step0
    for _ in range(max_iter):
        if np.max(np.abs(g)) < tol:
            return x
        cand = x - step * g
        fc = landscape.value(cand)
        gc = landscape.gradient(cand)
        gc_norm = float(np.linalg.norm(gc))
        if fc < fx or gc_norm < gnorm:
            x, fx, g, gnorm = cand, fc, gc, gc_norm
            step *= 1.25
        else:
            step *= 0.5
            if step < 1e-300:
                raise NonConvergenceError("descent step size underflowed")
    raise NonConvergenceError(
        f"no point with gradient sup-norm < {tol:g} within {max_iter} iterations"
    )


def make_linreg_dataset(n_features: int, n_data: int, seed: int) -> LinRegDataset:
    """Synthesize a regression dataset; deterministic given the seed.

    Features are drawn row-major from the seeded generator, strictly
    inside (0,1); targets follow the cubic rule of the dataset contract.
    """
    if n_features < 1 or n_data < 1:
        raise ValueError("n_features and n_data must be >= 1")
    rng = SplitMix64(seed)
    features = np.empty((n_data, n_features))
    for i in range(n_data):
        for a in range(n_features):
            features[i, a] = rng.random()
    targets = np.sum((features / n_features) ** 3, axis=1)
    return LinRegDataset(features=features, targets=targets, seed=seed)


def linreg_landscape(dataset: LinRegDataset) -> Landscape:
    """Mean-squared-error loss of the linear model theta0 + sum_a theta_a*x_a.

    dim = 1 + n_features; theta[0] is the intercept.
    """
    x = dataset.features
    y = dataset.targets
    n = dataset.n_data
    dim = 1 + dataset.n_features

    def _check(theta: np.ndarray) -> None:
        if theta.shape != (dim,):
            raise ValueError(
                f"theta has shape {theta.shape}, landscape needs ({dim},)"
            )

    def value(theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        _check(theta)
        resid = y - theta[0] - x @ theta[1:]
        return float(np.mean(resid * resid))

    def gradient(theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        _check(theta)
        resid = y - theta[0] - x @ theta[1:]
        grad = np.empty(dim)
        grad[0] = -2.0 * np.mean(resid)
        grad[1:] = (-2.0 / n) * (x.T @ resid)
        return grad

    return Landscape(
        dim=dim,
        value=value,
        gradient=gradient,
        minimum_hint=None,
        name=f"linreg(nf={dataset.n_features},nd={n})",
    )


def second_moment_matrix(dataset: LinRegDataset) -> np.ndarray:
    """M = mean over data of z z^T with z = (1, x); the Hessian is 2M."""
    z = np.hstack([np.ones((dataset.n_data, 1)), dataset.features])
    return (z.T @ z) / dataset.n_data


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps row by row until the off-diagonal sup-norm drops below `tol`.
    Returns (eigenvalues, eigenvectors) with eigenvectors as columns,
    unsorted.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.max(np.abs(a - np.diag(np.diag(a)))) if n > 1 else 0.0
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < tol / (10.0 * n):
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        raise NonConvergenceError("Jacobi sweeps did not reach tolerance")
    return np.diag(a).copy(), v


def linreg_hessian_spectrum(dataset: LinRegDataset) -> SpectrumReport:
    """Eigenvalues of the constant Hessian 2M via cyclic Jacobi rotations."""
    hessian = 2.0 * second_moment_matrix(dataset)
    eigenvalues, _ = jacobi_eigh(hessian, tol=1e-12)
    eigenvalues = np.sort(eigenvalues)
    return SpectrumReport(
        eigenvalues=eigenvalues,
        kappa_min=float(eigenvalues[0]),
        kappa_max=float(eigenvalues[-1]),
    )


def finite_diff_gradient(landscape: Landscape, point, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient oracle: (f(x+h e_j) - f(x-h e_j)) / (2h)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(point, dtype=float)
    grad = np.empty(landscape.dim)
    for j in range(landscape.dim):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        grad[j] = (landscape.value(xp) - landscape.value(xm)) / (2.0 * h)
    return grad
