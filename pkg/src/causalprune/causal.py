"""Partial-correlation PC+MCI causal graphs, causal fidelity scoring and
stage-1 window pruning.

Each (unit, rul_level) segment gets a global graph; every window gets a
local graph; windows whose strength matrix deviates from the global one
by more than the alignment threshold (mean squared entry difference) are
discarded.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .series import WindowSet, extract_segments


@dataclass
class CiResult:
    rho: float
    p_value: float
    cond_size: int


@dataclass
class CausalPruneConfig:
    alpha: float = 0.01
    tau_max: int = 0
    gamma: float = 2.0
    fixed_epsilon: float | None = 0.1
    max_cond_set: int = 3
    epsilon_floor: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.tau_max < 0:
            raise ValueError("tau_max must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "CausalPruneConfig":
        return cls(**{k: d[k] for k in (
            "alpha", "tau_max", "gamma", "fixed_epsilon", "max_cond_set",
            "epsilon_floor") if k in d})


@dataclass
class CausalGraph:
    """Square causal-strength matrix with a significance mask.

    strength[i, j] is the MCI partial correlation of the link i -> j
    (symmetric at lag 0); entries without a significant link are 0.
    """

    strength: np.ndarray
    significant: np.ndarray
    alpha: float

    def __post_init__(self):
        self.strength = np.asarray(self.strength, dtype=np.float64)
        self.significant = np.asarray(self.significant, dtype=bool)

    @property
    def dim(self) -> int:
        return self.strength.shape[0]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "alpha": self.alpha,
                "strength": self.strength.tolist(),
                "significant": self.significant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        return cls(np.array(d["strength"]), np.array(d["significant"]), d["alpha"])


@dataclass
class WindowFidelity:
    window_id: str
    unit_id: str
    rul_level: int
    start: int
    mse: float
    threshold: float
    retained: bool


def fisher_p(rho: float, n: int, cond_size: int) -> float:
    """Two-sided p-value of a (partial) correlation via the Fisher
    z-transform, z = atanh(rho) * sqrt(n - |Z| - 3)."""
    df = n - cond_size - 3
    if df <= 0:
        return 1.0
    r = abs(rho)
    if r >= 1.0:
        return 0.0
    z = math.atanh(r) * math.sqrt(df)
    return math.erfc(z / math.sqrt(2.0))


def parcorr(x, y, z=()) -> CiResult:
    """Partial-correlation CI test.

    rho is the Pearson correlation of the least-squares residuals of x
    and y on the conditioning set (plain correlation for empty z);
    zero-variance residuals give rho = 0, p = 1.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    zmat = (np.empty((x.shape[0], 0)) if len(z) == 0
            else np.ascontiguousarray(np.column_stack(list(z)), dtype=np.float64))
    n = x.shape[0]
    if y.shape[0] != n or (zmat.size and zmat.shape[0] != n):
        raise ValueError("parcorr inputs must share the same length")
    k = zmat.shape[1]
    if n < k + 3:
        raise ValueError(f"parcorr needs at least |Z|+3 samples, got {n}")
    rho = float(_kernels.parcorr_resid(x, y, zmat))
    return CiResult(rho=rho, p_value=fisher_p(rho, n, k), cond_size=k)


class _CorrTester:
    """CI tests for one sample matrix, backed by its correlation matrix.

    The precision-matrix route is algebraically identical to the
    residual-regression definition; on a singular submatrix it falls back
    to the explicit regression.
    """

    def __init__(self, data: np.ndarray):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.n = data.shape[0]
        self.corr = _kernels.corr_matrix(self.data)

    def test(self, i: int, j: int, cond: tuple[int, ...], alpha: float):
        carr = np.array(cond, dtype=np.int64)
        rho = float(_kernels.pcorr_from_corr(self.corr, i, j, carr))
        if math.isnan(rho):
            zmat = np.ascontiguousarray(self.data[:, list(cond)]) if cond else \
                np.empty((self.n, 0))
            rho = float(_kernels.parcorr_resid(
                np.ascontiguousarray(self.data[:, i]),
                np.ascontiguousarray(self.data[:, j]), zmat))
        p = fisher_p(rho, self.n, len(cond))
        return rho, p


def _pc_parents(tester: _CorrTester, targets: list[int],
                candidates: dict[int, list[int]], alpha: float,
                max_cond: int, symmetric: bool) -> dict[int, list[int]]:
    """PC skeleton step: grow conditioning-set size and drop links whose
    test accepts independence.  Subsets are enumerated in lexicographic
    order over the current candidate list; the first accepting subset
    removes the link."""
    adj = {t: list(candidates[t]) for t in targets}
    for level in range(max_cond + 1):
        for t in targets:
            for cand in list(adj[t]):
                others = [c for c in adj[t] if c != cand]
                if len(others) < level:
                    continue
                removed = False
                for subset in itertools.combinations(others, level):
                    _, p = tester.test(t, cand, subset, alpha)
                    if p > alpha:
                        removed = True
                        break
                if removed:
                    adj[t].remove(cand)
                    if symmetric and t in adj.get(cand, []):
                        adj[cand].remove(t)
    return adj


def pcmci_graph(segment: np.ndarray, config: CausalPruneConfig) -> CausalGraph:
    """PC candidate selection followed by MCI re-testing.

    tau_max = 0 tests instantaneous links only and yields a symmetric
    graph; tau_max > 0 adds lagged links (past -> present) and each (i, j)
    entry keeps the maximum-|rho| significant lag.
    """
    data = np.ascontiguousarray(segment, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("segment must be a 2-d sample matrix")
    n, p = data.shape
    strength = np.zeros((p, p))
    significant = np.zeros((p, p), dtype=bool)
    if p == 1 or n < 4:
        return CausalGraph(strength, significant, config.alpha)

    if config.tau_max == 0:
        tester = _CorrTester(data)
        max_cond = max(0, min(config.max_cond_set, n - 3))
        cands = {i: [j for j in range(p) if j != i] for i in range(p)}
        adj = _pc_parents(tester, list(range(p)), cands, config.alpha,
                          max_cond, symmetric=True)
        for i in range(p):
            for j in range(i + 1, p):
                if j not in adj[i] and i not in adj[j]:
                    continue
                cond = sorted((set(adj[i]) | set(adj[j])) - {i, j})[: max(0, n - 3)]
                rho, pval = tester.test(i, j, tuple(cond), config.alpha)
                if pval < config.alpha:
                    strength[i, j] = strength[j, i] = rho
                    significant[i, j] = significant[j, i] = True
        return CausalGraph(strength, significant, config.alpha)

    # lagged mode: columns are (variable, lag) pairs up to 2*tau_max so the
    # MCI step can condition on lag-shifted parents of the source
    tau = config.tau_max
    n_eff = n - 2 * tau
    if n_eff < 4:
        return CausalGraph(strength, significant, config.alpha)
    cols = {}
    stacked = []
    for v in range(p):
        for lag in range(2 * tau + 1):
            cols[(v, lag)] = len(stacked)
            stacked.append(data[2 * tau - lag: n - lag, v])
    tester = _CorrTester(np.column_stack(stacked))
    max_cond = max(0, min(config.max_cond_set, n_eff - 3))

    cand_keys = {}
    for j in range(p):
        cand_keys[j] = [(i, lag) for lag in range(tau + 1) for i in range(p)
                        if not (lag == 0 and i == j)]
    targets = [cols[(j, 0)] for j in range(p)]
    candidates = {cols[(j, 0)]: [cols[k] for k in cand_keys[j]] for j in range(p)}
    adj = _pc_parents(tester, targets, candidates, config.alpha, max_cond,
                      symmetric=False)
    parents = {j: [k for k in cand_keys[j] if cols[k] in adj[cols[(j, 0)]]]
               for j in range(p)}
    for j in range(p):
        for (i, lag) in parents[j]:
            cond = {cols[k] for k in parents[j] if k != (i, lag)}
            for (v, vl) in parents.get(i, []):
                if vl + lag <= 2 * tau:
                    cond.add(cols[(v, vl + lag)])
            cond -= {cols[(j, 0)], cols[(i, lag)]}
            cond_t = tuple(sorted(cond))[: max(0, n_eff - 3)]
            rho, pval = tester.test(cols[(j, 0)], cols[(i, lag)], cond_t,
                                    config.alpha)
            if pval < config.alpha and i != j:
                if abs(rho) > abs(strength[i, j]):
                    strength[i, j] = rho
                significant[i, j] = True
    return CausalGraph(strength, significant, config.alpha)


def causal_fidelity(global_graph: CausalGraph, local_graph: CausalGraph) -> float:
    """Mean squared difference of the two strength matrices."""
    if global_graph.strength.shape != local_graph.strength.shape:
        raise ValueError("graph dimensions differ")
    diff = global_graph.strength - local_graph.strength
    return float(np.mean(diff * diff))


def alignment_threshold(mses, config: CausalPruneConfig) -> float:
    """Fixed threshold when configured, otherwise max(mean - gamma*std,
    epsilon_floor) over the group's fidelity values."""
    arr = np.asarray(mses, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("alignment_threshold needs a nonempty list")
    if config.fixed_epsilon is not None:
        return float(config.fixed_epsilon)
    return float(max(arr.mean() - config.gamma * arr.std(), config.epsilon_floor))


@dataclass
class CausalPruneResult:
    retained_ids: list[str]
    records: list[WindowFidelity] = field(default_factory=list)
    global_graphs: dict = field(default_factory=dict)


def prune_causal(windows: WindowSet, segments: dict[tuple[str, int], np.ndarray],
                 config: CausalPruneConfig) -> CausalPruneResult:
    """Stage-1 pruning: per (unit, rul_level) group, score every window's
    fidelity against the group's global graph and retain windows at or
    below the alignment threshold (single-window groups are retained
    unconditionally)."""
    records: list[WindowFidelity] = []
    retained: list[str] = []
    graphs: dict[tuple[str, int], CausalGraph] = {}
    for key, group in windows.group_by_segment().items():
        segment = segments.get(key)
        if segment is None:
            raise ValueError(f"no source segment for group {key}")
        global_graph = pcmci_graph(segment, config)
        graphs[key] = global_graph
        mses = [causal_fidelity(global_graph, pcmci_graph(w.values, config))
                for w in group]
        threshold = alignment_threshold(mses, config)
        for w, mse in zip(group, mses):
            keep = bool(mse <= threshold) or len(group) == 1
            records.append(WindowFidelity(w.window_id, w.unit_id, w.rul_level,
                                          w.start, float(mse), threshold, keep))
            if keep:
                retained.append(w.window_id)
    records.sort(key=lambda r: (r.unit_id, r.start))
    return CausalPruneResult(retained_ids=retained, records=records,
                             global_graphs=graphs)


def prune_causal_series(windows: WindowSet, series_list, config: CausalPruneConfig
                        ) -> CausalPruneResult:
    """prune_causal with segments extracted from the source series."""
    needed = set(windows.group_by_segment())
    return prune_causal(windows, extract_segments(series_list, needed), config)


def export_graph(graph: CausalGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph.to_dict(), fh)


def load_graph(path) -> CausalGraph:
    with open(path) as fh:
        return CausalGraph.from_dict(json.load(fh))
