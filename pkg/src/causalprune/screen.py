"""Stage-2 screening: window feature extraction, two-component GMM fit by
EM, posterior scoring and the KL-penalized retention threshold.

Window features are [std, mean, entropy], computed per sensor channel and
averaged across channels, so the feature dimension is 3 for any number of
sensors.  The "high-quality" component is the one with the lower mean
entropy (noisy/corrupted windows run hot on entropy).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .gpopt import BayesOptResult, bayes_opt
from .series import Window

_LOG2PI = math.log(2.0 * math.pi)


@dataclass
class ScreenConfig:
    entropy_bins: int = 16
    lam: float = 1.0
    em_max_iters: int = 200
    em_tol: float = 1e-6
    cov_reg: float = 1e-6
    kl_bins: int = 32
    kl_smoothing: float = 1e-6
    target_retention: float | None = 0.9
    hard_quota: bool = False

    def __post_init__(self):
        if self.entropy_bins < 2 or self.kl_bins < 2:
            raise ValueError("histogram bin counts must be >= 2")
        if self.kl_smoothing <= 0:
            raise ValueError("kl_smoothing must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ScreenConfig":
        keys = ("entropy_bins", "lam", "em_max_iters", "em_tol", "cov_reg",
                "kl_bins", "kl_smoothing", "target_retention", "hard_quota")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass
class GmmModel:
    """Two-component Gaussian mixture over the 3-d window features."""

    weights: np.ndarray     # (2,), positive, sums to 1
    means: np.ndarray       # (2, 3)
    covariances: np.ndarray  # (2, 3, 3) symmetric positive-definite
    hq_index: int           # index of the high-quality component (0 or 1)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive and sum to 1")

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covariances": self.covariances.tolist(),
                "hq_index": int(self.hq_index)}

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        return cls(np.array(d["weights"]), np.array(d["means"]),
                   np.array(d["covariances"]), int(d["hq_index"]))


def shannon_entropy(samples, bins: int) -> float:
    """Histogram entropy in nats over [min, max]; constant samples -> 0."""
    arr = np.ascontiguousarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("shannon_entropy needs samples")
    return float(_kernels.hist_entropy(arr, bins))


def window_features(window: Window, config: ScreenConfig) -> np.ndarray:
    """[std, mean, entropy] averaged over the window's sensor channels
    (the RUL channel is excluded)."""
    vals = np.ascontiguousarray(window.sensor_values, dtype=np.float64)
    return np.asarray(_kernels.channel_stats(vals, config.entropy_bins))


def features_matrix(windows, config: ScreenConfig) -> np.ndarray:
    return np.array([window_features(w, config) for w in windows]) \
        if len(windows) else np.empty((0, 3))


def _log_gauss(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = mean.shape[0]
    chol = np.linalg.cholesky(cov)
    diff = x - mean
    sol = np.linalg.solve(chol, diff.T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (d * _LOG2PI + logdet + (sol * sol).sum(axis=0))


def _log_components(x: np.ndarray, model: GmmModel) -> np.ndarray:
    return np.column_stack([
        np.log(model.weights[m]) + _log_gauss(x, model.means[m], model.covariances[m])
        for m in range(2)])


def mixture_density(x, model: GmmModel) -> float:
    """Mixture pdf at a single feature vector."""
    lp = _log_components(np.atleast_2d(np.asarray(x, dtype=np.float64)), model)
    m = lp.max()
    return float(math.exp(m) * np.exp(lp - m).sum())


def fit_gmm(features, config: ScreenConfig, seed: int = 0,
            with_trace: bool = False):
    """EM fit of the two-component mixture.

    Initialization is k-means++-style: a seeded random first center and
    the farthest point as the second.  Covariance diagonals are
    regularized by cov_reg each M-step; iteration stops when the
    log-likelihood improves by less than em_tol.  with_trace additionally
    returns the per-iteration log-likelihood sequence.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 4:
        raise ValueError("fit_gmm needs at least 4 feature vectors")
    n, d = x.shape
    rng = np.random.default_rng(seed)
    first = x[int(rng.integers(n))]
    second = x[int(np.argmax(((x - first) ** 2).sum(axis=1)))]
    dist = np.stack([((x - first) ** 2).sum(axis=1),
                     ((x - second) ** 2).sum(axis=1)])
    assign = np.argmin(dist, axis=0)

    weights = np.empty(2)
    means = np.empty((2, d))
    covs = np.empty((2, d, d))
    for m in range(2):
        members = x[assign == m]
        if members.shape[0] == 0:
            members = x
        weights[m] = max(members.shape[0], 1) / n
        means[m] = members.mean(axis=0)
        diff = members - means[m]
        covs[m] = diff.T @ diff / max(members.shape[0], 1) + config.cov_reg * np.eye(d)
    weights /= weights.sum()

    model = GmmModel(weights, means, covs, 0)
    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(config.em_max_iters):
        lp = _log_components(x, model)               # (n, 2)
        mx = lp.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(lp - mx).sum(axis=1))
        ll = float(lse.sum())
        trace.append(ll)
        resp = np.exp(lp - lse[:, None])             # responsibilities
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-10)
        weights = nk / nk.sum()
        means = (resp.T @ x) / nk[:, None]
        for m in range(2):
            diff = x - means[m]
            covs[m] = (resp[:, m][:, None] * diff).T @ diff / nk[m]
            covs[m] += config.cov_reg * np.eye(d)
        model = GmmModel(weights, means, covs, 0)
        if abs(ll - prev_ll) < config.em_tol:
            break
        prev_ll = ll

    ent = model.means[:, 2]
    if ent[0] == ent[1]:
        hq = int(np.argmax(model.weights))
    else:
        hq = int(np.argmin(ent))
    model.hq_index = hq
    return (model, trace) if with_trace else model


def posterior_hq(f, model: GmmModel) -> float:
    """Posterior probability of the high-quality component, computed via
    log-density differences."""
    lp = _log_components(np.atleast_2d(np.asarray(f, dtype=np.float64)), model)[0]
    other = 1 - model.hq_index
    return float(1.0 / (1.0 + math.exp(min(700.0, lp[other] - lp[model.hq_index]))))


def posterior_hq_batch(features, model: GmmModel) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] == 0:
        return np.empty(0)
    lp = _log_components(x, model)
    delta = np.minimum(lp[:, 1 - model.hq_index] - lp[:, model.hq_index], 700.0)
    return 1.0 / (1.0 + np.exp(delta))


def kl_penalty(retained, full, config: ScreenConfig) -> float:
    """Summed per-dimension histogram KL(retained || full); bin edges come
    from the full set's range and both histograms are smoothed before
    normalizing."""
    f = np.asarray(full, dtype=np.float64)
    if f.shape[0] == 0:
        raise ValueError("kl_penalty needs a nonempty full set")
    r = np.asarray(retained, dtype=np.float64).reshape(-1, f.shape[1]) \
        if len(retained) else np.empty((0, f.shape[1]))
    total = 0.0
    for dim in range(f.shape[1]):
        lo, hi = float(f[:, dim].min()), float(f[:, dim].max())
        qc, _ = np.histogram(f[:, dim], bins=config.kl_bins, range=(lo, hi))
        pc, _ = np.histogram(r[:, dim], bins=config.kl_bins, range=(lo, hi)) \
            if r.shape[0] else (np.zeros(config.kl_bins), None)
        p = pc + config.kl_smoothing
        q = qc + config.kl_smoothing
        p = p / p.sum()
        q = q / q.sum()
        total += float((p * np.log(p / q)).sum())
    return total


def threshold_objective(theta: float, q, features, config: ScreenConfig,
                        lam: float | None = None) -> float:
    """J(theta) = #{q_k >= theta} - lam * KL(retained features || all)."""
    qa = np.asarray(q, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    if qa.shape[0] != f.shape[0]:
        raise ValueError("q and features must align")
    lam = config.lam if lam is None else lam
    mask = qa >= theta
    return float(mask.sum()) - lam * kl_penalty(f[mask], f, config)


@dataclass
class ThresholdResult:
    theta: float
    objective: float
    lam: float
    trace: list = field(default_factory=list)


# width of the soft retention-target band in the calibrated objective
_RETENTION_TOL = 0.02


def optimize_threshold(q, features, config: ScreenConfig, budget: int = 25,
                       seed: int = 0) -> ThresholdResult:
    """Pick the retention threshold by Bayesian optimization over [0, 1].

    Without a retention target the raw objective is maximized as is (both
    of its terms peak at full retention, so the optimum sits at the
    retain-everything plateau).  With target_retention set, no rescaled
    lam can pull that optimum to a partial-retention point, so the search
    is anchored instead: BO runs in quantile space with a quadratic
    penalty on the deviation from the target retention while the
    KL-penalty keeps its configured weight.  hard_quota skips the
    objective and returns the (1 - target) quantile of q directly.
    """
    qa = np.asarray(q, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    if config.target_retention is None:
        result: BayesOptResult = bayes_opt(
            lambda t: threshold_objective(t, qa, f, config),
            budget=budget, seed=seed)
        return ThresholdResult(result.theta, result.value, config.lam,
                               result.trace)
    if config.hard_quota:
        theta = float(np.quantile(qa, 1.0 - config.target_retention))
        return ThresholdResult(theta, threshold_objective(theta, qa, f, config),
                               config.lam, [])

    n = qa.shape[0]
    target = config.target_retention

    def j_calibrated(t: float) -> float:
        theta = float(np.quantile(qa, t))
        mask = qa >= theta
        r = mask.mean()
        return (float(mask.sum())
                - config.lam * kl_penalty(f[mask], f, config)
                - n * ((r - target) / _RETENTION_TOL) ** 2)

    result = bayes_opt(j_calibrated, budget=budget, seed=seed)
    theta = float(np.quantile(qa, result.theta))
    return ThresholdResult(theta, result.value, config.lam, result.trace)


def prune_quality(window_ids, q, theta: float) -> list:
    """Retain windows with posterior q >= theta (inclusive)."""
    qa = np.asarray(q, dtype=np.float64)
    if len(window_ids) != qa.shape[0]:
        raise ValueError("window ids and posteriors must align")
    return [wid for wid, qv in zip(window_ids, qa) if qv >= theta]


def export_gmm(model: GmmModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_gmm(path) -> GmmModel:
    with open(path) as fh:
        return GmmModel.from_dict(json.load(fh))
