"""Ground-truth generators: linear structural-causal samples with a known
adjacency, and degradation trajectories with labeled corrupted spans.

These back every end-to-end test: the SCM gives causal-recovery oracles,
and the degradation generator produces run-to-failure units whose clean
segments share a stable coupling structure while a chosen fraction of
window-aligned spans is corrupted (and recorded)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .series import SensorSeries

CORRUPTION_KINDS = ("channel-shuffle", "heavy-noise", "constant-stuck")


@dataclass
class ScmSpec:
    d: int
    adjacency: np.ndarray                  # (d, d); [i, j] = weight of i -> j
    lag1: np.ndarray | None = None
    noise_std: float = 1.0
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        if self.lag1 is not None:
            self.lag1 = np.asarray(self.lag1, dtype=np.float64)
        if self.adjacency.shape != (self.d, self.d):
            raise ValueError("adjacency must be (d, d)")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be > 0")


def _topo_order(adj: np.ndarray) -> list[int]:
    d = adj.shape[0]
    indeg = [int(np.count_nonzero(adj[:, j])) for j in range(d)]
    ready = [j for j in range(d) if indeg[j] == 0]
    order = []
    while ready:
        j = ready.pop(0)
        order.append(j)
        for k in range(d):
            if adj[j, k] != 0:
                indeg[k] -= 1
                if indeg[k] == 0:
                    ready.append(k)
    if len(order) != d:
        raise ValueError("instantaneous adjacency must be acyclic")
    return order


def gen_scm(spec: ScmSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample the linear SCM; returns (data (n, d), true link matrix).

    Variables are generated in topological order with Gaussian noise of
    scale noise_std; the truth matrix marks instantaneous and lag-1 links.
    """
    order = _topo_order(spec.adjacency)
    rng = np.random.default_rng(spec.seed)
    eps = rng.normal(0.0, spec.noise_std, size=(spec.n, spec.d))
    x = np.zeros((spec.n, spec.d))
    if spec.lag1 is None:
        for j in order:
            x[:, j] = eps[:, j]
            for i in range(spec.d):
                if spec.adjacency[i, j] != 0:
                    x[:, j] += spec.adjacency[i, j] * x[:, i]
    else:
        for t in range(spec.n):
            for j in order:
                v = eps[t, j]
                for i in range(spec.d):
                    if spec.adjacency[i, j] != 0:
                        v += spec.adjacency[i, j] * x[t, i]
                    if t > 0 and spec.lag1[i, j] != 0:
                        v += spec.lag1[i, j] * x[t - 1, i]
                x[t, j] = v
    truth = spec.adjacency != 0
    if spec.lag1 is not None:
        truth = truth | (spec.lag1 != 0)
    return x, truth


def default_coupling(d: int, corr: float = 0.95) -> np.ndarray:
    """Disjoint-pair coupling (s1 -> s2, s3 -> s4, ...).

    Pairs keep their full correlation under MCI conditioning (their
    neighbor sets are empty beyond each other), unlike chains whose
    interior partial correlations cap at c / (1 + c^2).  Pair strengths
    step down slightly so no channel permutation maps the link pattern
    onto itself.  Weights assume a shared noise scale.
    """
    a = np.zeros((d, d))
    c = corr
    for j in range(0, d - 1, 2):
        a[j, j + 1] = c / np.sqrt(1.0 - c ** 2)
        c = max(0.5, c - 0.05)
    return a


@dataclass
class CorruptSpan:
    unit_id: str
    start: int
    length: int

    def to_dict(self) -> dict:
        return {"unit": self.unit_id, "start": self.start, "length": self.length}


@dataclass
class DegradationSpec:
    units: int
    cycles_per_unit: int
    d: int
    trend_coeffs: np.ndarray | None = None
    noise_std: float = 0.3
    corrupt_fraction: float = 0.0
    corruption_kind: str = "channel-shuffle"
    seed: int = 0
    steps_per_cycle: int = 100   # samples per cycle (RUL is constant within one)
    coupling: np.ndarray | None = None
    span_len: int = 50           # corruption spans align to this window grid
    stratified: bool = True      # spread corrupted spans evenly across cycles

    def __post_init__(self):
        if not 0.0 <= self.corrupt_fraction < 1.0:
            raise ValueError("corrupt_fraction must lie in [0, 1)")
        if self.corruption_kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind {self.corruption_kind!r}")
        if self.coupling is None:
            self.coupling = default_coupling(self.d)
        self.coupling = np.asarray(self.coupling, dtype=np.float64)
        if self.trend_coeffs is None:
            signs = np.where(np.arange(self.d) % 2 == 0, 1.0, -1.0)
            self.trend_coeffs = signs * np.linspace(1.0, 2.0, self.d)
        self.trend_coeffs = np.asarray(self.trend_coeffs, dtype=np.float64)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        keys = ("units", "cycles_per_unit", "d", "trend_coeffs", "noise_std",
                "corrupt_fraction", "corruption_kind", "seed",
                "steps_per_cycle", "coupling", "span_len", "stratified")
        kw = {k: d[k] for k in keys if k in d and d[k] is not None}
        for k in ("trend_coeffs", "coupling"):
            if k in kw:
                kw[k] = np.asarray(kw[k], dtype=np.float64)
        if "coupling" not in kw and "coupling_corr" in d:
            kw["coupling"] = default_coupling(d["d"], d["coupling_corr"])
        return cls(**kw)


def _choose_spans(spec: DegradationSpec, n_spans: int, n_corrupt: int,
                  rng: np.random.Generator) -> np.ndarray:
    if not spec.stratified:
        return np.sort(rng.choice(n_spans, size=n_corrupt, replace=False))
    # spread the corrupted spans across cycles: per-cycle quotas follow the
    # cumulative target so the total stays exact
    per_cycle = max(1, spec.steps_per_cycle // spec.span_len)
    chosen: list[int] = []
    assigned = 0
    seen = 0
    for lo in range(0, n_spans, per_cycle):
        bucket = np.arange(lo, min(lo + per_cycle, n_spans))
        seen += bucket.size
        quota = int(round(n_corrupt * seen / n_spans)) - assigned
        quota = min(quota, bucket.size)
        if quota > 0:
            chosen.extend(rng.choice(bucket, size=quota, replace=False))
            assigned += quota
    return np.sort(np.array(chosen, dtype=np.int64))


def _corrupt_span(values: np.ndarray, kind: str, noise_std: float,
                  rng: np.random.Generator) -> np.ndarray:
    out = values.copy()
    if kind == "channel-shuffle":
        # each channel's rows are shuffled independently: marginals stay
        # exact, every cross-channel dependency inside the span dies
        for c in range(out.shape[1]):
            out[:, c] = out[rng.permutation(out.shape[0]), c]
    elif kind == "heavy-noise":
        # uniform noise an order of magnitude above the base scale: drowns
        # cross-channel structure and flattens the histogram (entropy up)
        a = 10.0 * noise_std
        out += rng.uniform(-a, a, size=out.shape)
    else:  # constant-stuck
        out[:] = out[0]
    return out


def gen_degradation(spec: DegradationSpec
                    ) -> tuple[list[SensorSeries], list[CorruptSpan]]:
    """Run-to-failure units with a stable causal coupling, monotone
    degradation trends and window-aligned corrupted spans.

    RUL counts down cycles_per_unit-1 ... 0, constant within a cycle of
    steps_per_cycle samples.  round(corrupt_fraction * span count) spans
    per unit are corrupted and returned as ground truth.
    """
    order = _topo_order(spec.coupling)
    root_ss = np.random.SeedSequence(spec.seed)
    unit_seeds = root_ss.spawn(spec.units)
    t_total = spec.cycles_per_unit * spec.steps_per_cycle
    rul_col = np.repeat(np.arange(spec.cycles_per_unit - 1, -1, -1.0),
                        spec.steps_per_cycle)
    progress = np.arange(t_total) / max(1, t_total - 1)

    series_list: list[SensorSeries] = []
    labels: list[CorruptSpan] = []
    n_spans = t_total // spec.span_len
    n_corrupt = int(round(spec.corrupt_fraction * n_spans))
    for u in range(spec.units):
        rng = np.random.default_rng(unit_seeds[u])
        eps = rng.normal(0.0, spec.noise_std, size=(t_total, spec.d))
        x = np.zeros((t_total, spec.d))
        for j in order:
            x[:, j] = eps[:, j]
            for i in range(spec.d):
                if spec.coupling[i, j] != 0:
                    x[:, j] += spec.coupling[i, j] * x[:, i]
        # homogeneous channel scales (correlations are unaffected): without
        # this, corruption that relocates a high-variance channel would
        # dominate a low-variance position's pooled statistics
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        x += spec.trend_coeffs * progress[:, None]
        unit_id = f"u{u}"
        if n_corrupt:
            chosen = _choose_spans(spec, n_spans, n_corrupt, rng)
            for s in chosen:
                a = int(s) * spec.span_len
                b = a + spec.span_len
                x[a:b] = _corrupt_span(x[a:b], spec.corruption_kind,
                                       spec.noise_std, rng)
                labels.append(CorruptSpan(unit_id, a, spec.span_len))
        series_list.append(SensorSeries(unit_id, x, rul_col.copy()))
    return series_list, labels


def corrupted_window_flags(windows, labels: list[CorruptSpan],
                           width: int) -> np.ndarray:
    """True for windows lying entirely inside corrupted territory."""
    spans: dict[str, set[int]] = {}
    for lab in labels:
        spans.setdefault(lab.unit_id, set()).update(
            range(lab.start, lab.start + lab.length))
    flags = []
    for w in windows:
        covered = spans.get(w.unit_id, ())
        flags.append(all(t in covered for t in range(w.start, w.start + width)))
    return np.array(flags, dtype=bool)


def write_corrupt_labels(labels: list[CorruptSpan], path) -> None:
    with open(path, "w") as fh:
        for lab in labels:
            fh.write(json.dumps(lab.to_dict()) + "\n")


def load_corrupt_labels(path) -> list[CorruptSpan]:
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            out.append(CorruptSpan(d["unit"], d["start"], d["length"]))
    return out
