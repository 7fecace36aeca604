import numpy as np
import pytest

from causalprune.screen import ScreenConfig, features_matrix
from causalprune.series import make_windows_all
from causalprune.synth import (DegradationSpec, ScmSpec, corrupted_window_flags,
                               default_coupling, gen_degradation, gen_scm,
                               load_corrupt_labels, write_corrupt_labels)


class TestGenScm:
    def test_zero_adjacency_independent(self):
        data, truth = gen_scm(ScmSpec(d=4, adjacency=np.zeros((4, 4)),
                                      n=2000, seed=0))
        assert not truth.any()
        corr = np.corrcoef(data.T)
        np.fill_diagonal(corr, 0.0)
        assert np.abs(corr).max() <= 0.1

    def test_linear_link_correlation(self):
        adj = np.zeros((3, 3))
        adj[0, 1] = 0.9
        data, truth = gen_scm(ScmSpec(d=3, adjacency=adj, noise_std=1.0,
                                      n=5000, seed=1))
        want = 0.9 / np.sqrt(0.81 + 1.0)
        got = np.corrcoef(data[:, 0], data[:, 1])[0, 1]
        assert abs(got - want) < 0.05
        assert truth[0, 1] and truth.sum() == 1

    def test_deterministic(self):
        spec = ScmSpec(d=3, adjacency=np.eye(3, k=1) * 0.5, n=500, seed=9)
        a, _ = gen_scm(spec)
        b, _ = gen_scm(spec)
        assert np.array_equal(a, b)

    def test_cycle_rejected(self):
        adj = np.array([[0.0, 0.5], [0.5, 0.0]])
        with pytest.raises(ValueError):
            gen_scm(ScmSpec(d=2, adjacency=adj))

    def test_lag1_links_in_truth(self):
        lag1 = np.zeros((2, 2))
        lag1[0, 1] = 0.7
        data, truth = gen_scm(ScmSpec(d=2, adjacency=np.zeros((2, 2)),
                                      lag1=lag1, n=800, seed=2))
        assert truth[0, 1]
        got = np.corrcoef(data[:-1, 0], data[1:, 1])[0, 1]
        assert got > 0.4


def small_spec(**kw):
    base = dict(units=2, cycles_per_unit=8, steps_per_cycle=100, d=4,
                noise_std=0.3, corrupt_fraction=0.0, span_len=50, seed=5)
    base.update(kw)
    return DegradationSpec.from_dict(base)


class TestGenDegradation:
    def test_no_corruption_no_labels(self):
        _, labels = gen_degradation(small_spec())
        assert labels == []

    def test_rul_counts_down_per_cycle(self):
        series, _ = gen_degradation(small_spec())
        for s in series:
            per_cycle = s.rul.reshape(8, 100)
            assert np.all(per_cycle == per_cycle[:, :1])
            assert np.array_equal(per_cycle[:, 0], np.arange(7, -1, -1.0))

    def test_label_count_exact(self):
        spec = small_spec(corrupt_fraction=0.25)
        series, labels = gen_degradation(spec)
        spans_per_unit = (8 * 100) // 50
        assert len(labels) == 2 * round(0.25 * spans_per_unit)

    def test_heavy_noise_raises_entropy(self):
        spec = small_spec(corrupt_fraction=0.2, corruption_kind="heavy-noise",
                          units=1)
        series, labels = gen_degradation(spec)
        windows = make_windows_all(series, 50, 50)
        flags = corrupted_window_flags(windows, labels, 50)
        feats = features_matrix(list(windows), ScreenConfig())
        clean_median = np.median(feats[~flags, 2])
        assert np.all(feats[flags, 2] > clean_median)

    def test_constant_stuck_kills_variance(self):
        spec = small_spec(corrupt_fraction=0.2, corruption_kind="constant-stuck",
                          units=1)
        series, labels = gen_degradation(spec)
        windows = make_windows_all(series, 50, 50)
        flags = corrupted_window_flags(windows, labels, 50)
        feats = features_matrix(list(windows), ScreenConfig())
        assert np.all(feats[flags, 0] < 1e-12)

    def test_channel_shuffle_preserves_marginals(self):
        spec = small_spec(corrupt_fraction=0.25, units=1,
                          corruption_kind="channel-shuffle")
        clean, _ = gen_degradation(small_spec(units=1))
        shuffled, labels = gen_degradation(spec)
        for lab in labels:
            a = clean[0].readings[lab.start:lab.start + lab.length]
            b = shuffled[0].readings[lab.start:lab.start + lab.length]
            for c in range(a.shape[1]):
                assert np.array_equal(np.sort(a[:, c]), np.sort(b[:, c]))

    def test_deterministic(self):
        spec = small_spec(corrupt_fraction=0.3)
        a, la = gen_degradation(spec)
        b, lb = gen_degradation(spec)
        assert all(np.array_equal(x.readings, y.readings) for x, y in zip(a, b))
        assert [l.to_dict() for l in la] == [l.to_dict() for l in lb]

    def test_stratified_spreads_across_cycles(self):
        spec = small_spec(corrupt_fraction=0.5, units=1)
        _, labels = gen_degradation(spec)
        cycles_hit = {lab.start // 100 for lab in labels}
        assert len(cycles_hit) == 8  # every cycle gets its share

    def test_labels_roundtrip(self, tmp_path):
        _, labels = gen_degradation(small_spec(corrupt_fraction=0.25))
        write_corrupt_labels(labels, tmp_path / "l.jsonl")
        back = load_corrupt_labels(tmp_path / "l.jsonl")
        assert [l.to_dict() for l in back] == [l.to_dict() for l in labels]

    def test_invalid_kind_rejected(self):
        with pytest.raises(ValueError):
            small_spec(corruption_kind="gremlins")


def test_default_coupling_pairs_recoverable():
    # the generator's stable structure is the oracle for causal recovery
    from causalprune.causal import CausalPruneConfig, pcmci_graph
    series, _ = gen_degradation(small_spec(units=1, d=5))
    seg = np.column_stack([series[0].readings[:500],
                           series[0].rul[:500]])
    g = pcmci_graph(seg, CausalPruneConfig())
    coupling = default_coupling(5)
    for i in range(5):
        for j in range(5):
            if coupling[i, j] != 0:
                assert g.significant[i, j]
