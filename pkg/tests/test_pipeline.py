import json
from pathlib import Path

import numpy as np
import pytest

from causalprune.cli import main
from causalprune.pipeline import (PipelineConfig, read_jsonl, run_eval,
                                  run_finetune, run_prune, run_report,
                                  run_synth, run_train)
from causalprune.series import load_series

SPEC = {"units": 2, "cycles_per_unit": 8, "steps_per_cycle": 250, "d": 4,
        "noise_std": 0.3, "corrupt_fraction": 0.2, "coupling_corr": 0.95,
        "corruption_kind": "channel-shuffle", "span_len": 50, "seed": 3}

PIPE = {"seed": 5, "downsample_factor": 1, "window": 50, "stride": 50,
        "arm": "cg", "bo_budget": 10,
        "causal": {"alpha": 0.01, "fixed_epsilon": 0.03},
        "screen": {"target_retention": 0.9},
        "predictor": {"embed_dim": 8, "heads": 2, "layers": 1, "ffn_dim": 16},
        "train": {"learning_rate": 0.05, "batch_size": 16, "max_epochs": 4,
                  "label_scale": 8.0}}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    run_synth(SPEC, out, log=lambda *a, **k: None)
    return out


def cfg_for(out_dir, data, **over):
    d = {**PIPE, "out_dir": str(out_dir), "train_data": str(data / "data.csv")}
    d.update(over)
    return PipelineConfig.from_dict(d)


class TestSynthCommand:
    def test_files_exist_and_roundtrip(self, dataset):
        series = load_series(dataset / "data.csv")
        assert len(series) == 2
        assert (dataset / "corrupt_labels.jsonl").exists()

    def test_label_count_matches_spec_arithmetic(self, dataset):
        labels = read_jsonl(dataset / "corrupt_labels.jsonl")
        spans_per_unit = (8 * 250) // 50
        assert len(labels) == 2 * round(0.2 * spans_per_unit)

    def test_seed_changes_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_synth({**SPEC, "units": 1}, a, log=lambda *x, **k: None)
        run_synth({**SPEC, "units": 1, "seed": 99}, b, log=lambda *x, **k: None)
        assert (a / "data.csv").read_bytes() != (b / "data.csv").read_bytes()

    def test_cli_synth_preset(self, tmp_path):
        rc = main(["synth", "--preset", "selectivity", "--out",
                   str(tmp_path / "p")])
        assert rc == 0 and (tmp_path / "p" / "data.csv").exists()


class TestPruneArms:
    def test_full_retains_everything(self, dataset, tmp_path):
        s = run_prune(cfg_for(tmp_path, dataset, arm="full"),
                      log=lambda *a, **k: None)
        assert s["fraction"] == 1.0

    def test_sub_strides_windows(self, dataset, tmp_path):
        s = run_prune(cfg_for(tmp_path, dataset, arm="sub", sub_stride=10),
                      log=lambda *a, **k: None)
        assert s["retained"] == int(np.ceil(s["full"] / 10))

    def test_pc_runs_stage_one_only(self, dataset, tmp_path):
        s = run_prune(cfg_for(tmp_path, dataset, arm="pc"),
                      log=lambda *a, **k: None)
        index = read_jsonl(Path(tmp_path) / "prune_index.jsonl")
        assert all(r["q"] is None for r in index)
        assert any(r["mse_causal"] is not None for r in index)
        assert s["removed_stage2"] == 0

    def test_cg_runs_both_stages(self, dataset, tmp_path):
        s = run_prune(cfg_for(tmp_path, dataset), log=lambda *a, **k: None)
        assert s["removed_stage1"] > 0 and s["removed_stage2"] > 0
        assert (Path(tmp_path) / "gmm.json").exists()
        assert (Path(tmp_path) / "threshold.json").exists()

    def test_rerun_byte_identical(self, dataset, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_prune(cfg_for(a, dataset), log=lambda *x, **k: None)
        run_prune(cfg_for(b, dataset), log=lambda *x, **k: None)
        for name in ("prune_index.jsonl", "fidelity_report.jsonl",
                     "screening_report.jsonl", "gmm.json", "threshold.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_empty_retention_flagged(self, dataset, tmp_path):
        # epsilon below every fidelity value discards all multi-window groups
        cfg = cfg_for(tmp_path, dataset, arm="pc",
                      causal={"alpha": 0.01, "fixed_epsilon": 1e-12})
        s = run_prune(cfg, log=lambda *a, **k: None)
        assert s.get("empty") is True
        assert (Path(tmp_path) / "prune_index.jsonl").exists()


@pytest.fixture(scope="module")
def flow(dataset, tmp_path_factory):
    root = tmp_path_factory.mktemp("flow")
    test_dir = root / "testdata"
    run_synth({**SPEC, "units": 1, "seed": 77, "corrupt_fraction": 0.0},
              test_dir, log=lambda *a, **k: None)
    prune_dir = root / "prune"
    run_prune(cfg_for(prune_dir, dataset), log=lambda *a, **k: None)
    train_dir = root / "train"
    run_train(cfg_for(train_dir, dataset), log=lambda *a, **k: None)
    ft_dir = root / "ft"
    run_finetune(cfg_for(ft_dir, dataset),
                 train_dir / "checkpoint.json",
                 prune_dir / "prune_index.jsonl",
                 log=lambda *a, **k: None)
    return root, test_dir, prune_dir, train_dir, ft_dir


class TestTrainEvalFlow:
    def test_train_writes_artifacts(self, flow):
        _, _, _, train_dir, _ = flow
        assert (train_dir / "checkpoint.json").exists()
        hist = read_jsonl(train_dir / "history.jsonl")
        assert {"epoch", "train_loss", "val_loss", "seconds"} <= set(hist[0])

    def test_eval_produces_finite_report(self, flow):
        root, test_dir, prune_dir, _, ft_dir = flow
        cfg = cfg_for(root / "ev", test_dir)
        cfg.test_data = str(test_dir / "data.csv")
        rep = run_eval(cfg, ft_dir / "finetuned.json", ft_dir / "normalizer.json",
                       prune_dir / "prune_index.jsonl", log=lambda *a, **k: None)
        assert np.isfinite(rep.rmse) and np.isfinite(rep.nasa_score)
        assert 0 < rep.retention_fraction < 1
        traces = read_jsonl(root / "ev" / "traces.jsonl")
        assert len(traces) == rep.n
        assert {"unit", "start", "label", "pred"} <= set(traces[0])

    def test_eval_checkpoint_shape_mismatch(self, flow, tmp_path):
        root, test_dir, _, train_dir, ft_dir = flow
        cfg = cfg_for(tmp_path, test_dir)
        cfg.test_data = str(test_dir / "data.csv")
        cfg.predictor = {"embed_dim": 8, "heads": 2, "layers": 1}
        bad = json.loads((train_dir / "checkpoint.json").read_text())
        bad["config"]["input_channels"] = 7
        (tmp_path / "bad.json").write_text(json.dumps(bad))
        with pytest.raises(ValueError, match="channels"):
            run_eval(cfg, tmp_path / "bad.json", ft_dir / "normalizer.json",
                     log=lambda *a, **k: None)

    def test_report_command(self, flow):
        _, _, prune_dir, _, _ = flow
        result = run_report(prune_dir, log=lambda *a, **k: None)
        assert result["retained"] + result["removed_stage1"] \
            + result["removed_stage2"] == result["full"]
        assert "feature_histograms" in result
        assert (prune_dir / "report.json").exists()

    def test_finetune_requires_windows(self, dataset, flow, tmp_path):
        _, _, _, train_dir, _ = flow
        empty_index = tmp_path / "empty.jsonl"
        empty_index.write_text("")
        cfg = cfg_for(tmp_path, dataset)
        with pytest.raises(ValueError, match="no training windows"):
            run_finetune(cfg, train_dir / "checkpoint.json", empty_index,
                         log=lambda *a, **k: None)


class TestCli:
    def test_prune_cli_exit_codes(self, dataset, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(
            {**PIPE, "train_data": str(dataset / "data.csv")}))
        rc = main(["prune", "--config", str(cfg_path), "--out",
                   str(tmp_path / "out"), "--arm", "full"])
        assert rc == 0
        bad = {**PIPE, "train_data": str(dataset / "data.csv"),
               "causal": {"alpha": 0.01, "fixed_epsilon": 1e-12}, "arm": "pc"}
        cfg_path.write_text(json.dumps(bad))
        rc = main(["prune", "--config", str(cfg_path), "--out",
                   str(tmp_path / "out2")])
        assert rc == 2

    def test_synth_needs_exactly_one_source(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["synth", "--out", str(tmp_path)])
