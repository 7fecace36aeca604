"""RMSE, the asymmetric prognostics score, retention statistics and the
PCA + linear-boundary separability diagnostic."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


def rmse(preds, labels) -> float:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("rmse needs aligned, nonempty inputs")
    return float(np.sqrt(np.mean((p - y) ** 2)))


def nasa_score(preds, labels) -> float:
    """Asymmetric exponential penalty: late predictions (e >= 0) are
    charged exp(e/10) - 1, early ones exp(-e/13) - 1, summed."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("nasa_score needs aligned, nonempty inputs")
    e = p - y
    return float(np.where(e < 0, np.exp(-e / 13.0) - 1.0,
                          np.exp(e / 10.0) - 1.0).sum())


def pca_projection(features: np.ndarray, n_components: int = 2) -> np.ndarray:
    """Project onto the top principal components of the pooled covariance."""
    x = np.asarray(features, dtype=np.float64)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / max(1, x.shape[0])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:n_components]
    return xc @ vecs[:, order]


def separability(retained_features, discarded_features, seed: int = 0,
                 epochs: int = 200) -> float | None:
    """Balanced training accuracy of a linear boundary on the 2-D PCA
    projection of the pooled features.

    Diagnostic only.  Batch perceptron updates keep the result invariant
    under swapping the two sets (the boundary flips sign exactly).  The
    seed is accepted for interface stability; the procedure is
    deterministic.  Returns None when either set has < 2 points.
    """
    r = np.asarray(retained_features, dtype=np.float64)
    d = np.asarray(discarded_features, dtype=np.float64)
    if r.shape[0] < 2 or d.shape[0] < 2:
        return None
    proj = pca_projection(np.vstack([r, d]))
    scale = proj.std(axis=0)
    proj = proj / np.where(scale > 0, scale, 1.0)
    z = np.column_stack([proj, np.ones(proj.shape[0])])
    labels = np.concatenate([np.ones(r.shape[0]), -np.ones(d.shape[0])])
    w = np.zeros(z.shape[1])
    lr = 0.1
    for _ in range(epochs):
        margins = labels * (z @ w)
        mis = margins <= 0
        if not mis.any():
            break
        w += lr * (labels[mis][:, None] * z[mis]).sum(axis=0) / z.shape[0]
    pred = np.where(z @ w >= 0, 1.0, -1.0)
    acc_r = float(np.mean(pred[labels > 0] == 1.0))
    acc_d = float(np.mean(pred[labels < 0] == -1.0))
    return 0.5 * (acc_r + acc_d)


@dataclass
class RetentionStats:
    full_count: int
    retained_count: int
    fraction: float
    removed_stage1: int
    removed_stage2: int


def retention_stats(records: list[dict]) -> RetentionStats:
    """Summarize a prune index: retained counts plus per-stage attribution
    (windows discarded at the causal stage never received a posterior, so
    their q field is null)."""
    if not records:
        raise ValueError("retention_stats needs a nonempty report")
    full = len(records)
    retained = sum(1 for r in records if r["retained"])
    removed1 = sum(1 for r in records
                   if not r["retained"] and r.get("q") is None)
    removed2 = full - retained - removed1
    return RetentionStats(full, retained, retained / full, removed1, removed2)


@dataclass
class EvalReport:
    rmse: float
    nasa_score: float
    n: int
    retention_fraction: float = 1.0
    separability_accuracy: float | None = None

    def __post_init__(self):
        if self.rmse < 0 or self.nasa_score < -1e-12:
            raise ValueError("metrics must be nonnegative")

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "nasa_score": self.nasa_score, "n": self.n,
                "retention_fraction": self.retention_fraction,
                "separability_accuracy": self.separability_accuracy}


def export_report(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh)


def export_scatter(proj: np.ndarray, retained_flags, path) -> None:
    """Plot-ready per-window projection records {pc1, pc2, retained}."""
    with open(path, "w") as fh:
        for (p1, p2), flag in zip(proj, retained_flags):
            fh.write(json.dumps({"pc1": float(p1), "pc2": float(p2),
                                 "retained": bool(flag)}) + "\n")
