"""One-dimensional Gaussian-process Bayesian optimization (Matern 5/2
kernel, expected-improvement acquisition on a fixed grid).

Everything is deterministic: fixed initial design, grid-restricted
acquisition, hyperparameters picked by marginal likelihood over a small
log-grid, and cached objective evaluations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_SQRT5 = math.sqrt(5.0)
_GRID = np.linspace(0.0, 1.0, 1001)
_INIT_POINTS = (0.0, 0.25, 0.5, 0.75, 1.0)
_LENGTHSCALES = (0.05, 0.1, 0.2, 0.5, 1.0)
_NOISES = (1e-6, 1e-4, 1e-2)
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


class GpNumericalError(RuntimeError):
    """Kernel matrix could not be factorized even at maximum jitter."""


class ObjectiveEvaluationError(RuntimeError):
    """Objective raised; carries the failing input."""

    def __init__(self, theta: float, cause: Exception):
        super().__init__(f"objective failed at theta={theta!r}: {cause}")
        self.theta = theta


@dataclass
class GpModel:
    inputs: np.ndarray
    values: np.ndarray
    lengthscale: float
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.inputs.shape != self.values.shape:
            raise ValueError("inputs and values must align")
        if self.lengthscale <= 0 or self.signal_variance <= 0 or self.noise_variance < 0:
            raise ValueError("invalid GP hyperparameters")


def matern52(x: float, y: float, lengthscale: float, signal_variance: float) -> float:
    r = abs(x - y)
    a = _SQRT5 * r / lengthscale
    return signal_variance * (1.0 + a + 5.0 * r * r / (3.0 * lengthscale ** 2)) * math.exp(-a)


def _kernel_matrix(xs: np.ndarray, ys: np.ndarray, lengthscale: float,
                   signal_variance: float) -> np.ndarray:
    r = np.abs(xs[:, None] - ys[None, :])
    a = _SQRT5 * r / lengthscale
    return signal_variance * (1.0 + a + 5.0 * r * r / (3.0 * lengthscale ** 2)) * np.exp(-a)


def _chol_with_jitter(k: np.ndarray) -> np.ndarray:
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise GpNumericalError("Cholesky failed after maximum jitter")


def _posterior(model: GpModel, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = _kernel_matrix(model.inputs, model.inputs, model.lengthscale,
                       model.signal_variance)
    k += model.noise_variance * np.eye(len(model.inputs))
    chol = _chol_with_jitter(k)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, model.values))
    ks = _kernel_matrix(model.inputs, xs, model.lengthscale, model.signal_variance)
    mean = ks.T @ alpha
    v = np.linalg.solve(chol, ks)
    var = model.signal_variance - (v * v).sum(axis=0)
    return mean, np.maximum(var, 0.0)


def gp_posterior(model: GpModel, x_star: float) -> tuple[float, float]:
    """Exact GP conditional (zero prior mean); variance clamped at 0."""
    if len(model.inputs) < 1:
        raise ValueError("gp_posterior needs at least one observation")
    mean, var = _posterior(model, np.array([float(x_star)]))
    return float(mean[0]), float(var[0])


def _log_marginal(model: GpModel) -> float:
    k = _kernel_matrix(model.inputs, model.inputs, model.lengthscale,
                       model.signal_variance)
    k += model.noise_variance * np.eye(len(model.inputs))
    try:
        chol = _chol_with_jitter(k)
    except GpNumericalError:
        return -np.inf
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, model.values))
    return float(-0.5 * model.values @ alpha
                 - np.log(np.diag(chol)).sum()
                 - 0.5 * len(model.values) * math.log(2.0 * math.pi))


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def expected_improvement(mean: float, variance: float, best_so_far: float) -> float:
    """EI for maximization; variance 0 degenerates to max(mean - best, 0)."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    sigma = math.sqrt(variance)
    if sigma == 0.0:
        return max(mean - best_so_far, 0.0)
    z = (mean - best_so_far) / sigma
    return (mean - best_so_far) * _norm_cdf(z) + sigma * _norm_pdf(z)


@dataclass
class BayesOptResult:
    theta: float
    value: float
    trace: list = field(default_factory=list)

    def export_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec) + "\n")


def bayes_opt(objective, budget: int, seed: int = 0) -> BayesOptResult:
    """Maximize ``objective`` over [0, 1].

    Five fixed initial points, then EI maximized on a 1001-point grid
    with GP hyperparameters refit by maximum likelihood each iteration.
    Returns the best evaluated point.  Deterministic for a given seed
    (the procedure itself contains no random choices).
    """
    if budget < 5:
        raise ValueError("budget must be >= 5")
    cache: dict[float, float] = {}
    trace: list[dict] = []

    def evaluate(theta: float) -> float:
        if theta in cache:
            return cache[theta]
        try:
            val = float(objective(theta))
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise ObjectiveEvaluationError(theta, exc) from exc
        cache[theta] = val
        trace.append({"iteration": len(trace), "theta": theta, "value": val})
        return val

    for theta in _INIT_POINTS:
        evaluate(theta)

    while len(cache) < budget:
        xs = np.array(sorted(cache))
        ys = np.array([cache[x] for x in xs])
        mu, sd = ys.mean(), ys.std()
        sd = sd if sd > 0 else 1.0
        ys_std = (ys - mu) / sd
        best_model = None
        best_ll = -np.inf
        for ls in _LENGTHSCALES:
            for noise in _NOISES:
                m = GpModel(xs, ys_std, ls, 1.0, noise)
                ll = _log_marginal(m)
                if ll > best_ll:
                    best_ll, best_model = ll, m
        mean, var = _posterior(best_model, _GRID)
        best_std = ys_std.max()
        ei = np.array([expected_improvement(m, v, best_std)
                       for m, v in zip(mean, var)])
        for x in xs:
            ei[np.abs(_GRID - x) < 1e-12] = -np.inf
        if not np.isfinite(ei.max()):
            break
        evaluate(float(_GRID[int(np.argmax(ei))]))

    best_theta = max(cache, key=lambda t: (cache[t], -t))
    return BayesOptResult(theta=float(best_theta), value=float(cache[best_theta]),
                          trace=trace)
