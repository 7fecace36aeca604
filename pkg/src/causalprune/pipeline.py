"""End-to-end pipeline: synth -> prune -> train -> finetune -> eval.

Every command is a pure function of (config, input files, root seed);
each stage derives its own seed from the root so reruns are
byte-identical (wall-clock timing fields aside)."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .causal import CausalPruneConfig, prune_causal_series
from .metrics import (EvalReport, export_report, export_scatter, nasa_score,
                      pca_projection, retention_stats, rmse, separability)
from .predictor import (PredictorConfig, TrainConfig, export_history, finetune,
                        init_model, load_checkpoint, predict, save_checkpoint,
                        train)
from .screen import (ScreenConfig, export_gmm, features_matrix, fit_gmm,
                     optimize_threshold, posterior_hq_batch, prune_quality)
from .series import (ColumnSchema, NormalizerParams, SensorSeries, downsample,
                     fit_normalizer, load_series, make_windows_all,
                     normalize_values, write_series, write_window_index)
from .synth import DegradationSpec, gen_degradation, write_corrupt_labels

ARMS = ("cg", "pc", "full", "sub")

_STAGE_IDS = {"gmm": 1, "bo": 2, "train": 3, "finetune": 4}


def stage_seed(root_seed: int, stage: str) -> int:
    """Deterministic per-stage seed derived from the root seed."""
    ss = np.random.SeedSequence([root_seed, _STAGE_IDS[stage]])
    return int(ss.generate_state(1)[0])


@dataclass
class PipelineConfig:
    seed: int = 0
    out_dir: str = "out"
    train_data: str | None = None
    test_data: str | None = None
    source_data: str | None = None
    schema: ColumnSchema = field(default_factory=ColumnSchema)
    downsample_factor: int = 10
    window: int = 50
    stride: int = 1
    arm: str = "cg"
    sub_stride: int = 10
    bo_budget: int = 25
    causal: CausalPruneConfig = field(default_factory=CausalPruneConfig)
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    predictor: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"arm must be one of {ARMS}")
        if self.downsample_factor < 1 or self.window < 1 or self.stride < 1:
            raise ValueError("series parameters must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        kw = {k: d[k] for k in ("seed", "out_dir", "train_data", "test_data",
                                "source_data", "downsample_factor", "window",
                                "stride", "arm", "sub_stride", "bo_budget",
                                "predictor") if k in d}
        if "schema" in d:
            kw["schema"] = ColumnSchema.from_dict(d["schema"])
        if "causal" in d:
            kw["causal"] = CausalPruneConfig.from_dict(d["causal"])
        if "screen" in d:
            kw["screen"] = ScreenConfig.from_dict(d["screen"])
        if "train" in d:
            kw["train"] = TrainConfig.from_dict(d["train"])
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _load_prepared(cfg: PipelineConfig, path) -> list[SensorSeries]:
    series = load_series(path, cfg.schema)
    return [downsample(s, cfg.downsample_factor) for s in series]


def _write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_synth(spec: DegradationSpec | dict, out_dir, log=print) -> dict:
    """Generate a degradation dataset plus ground-truth corruption labels."""
    if isinstance(spec, dict):
        spec = DegradationSpec.from_dict(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series, labels = gen_degradation(spec)
    write_series(series, out / "data.csv")
    write_corrupt_labels(labels, out / "corrupt_labels.jsonl")
    log(f"synth: wrote {sum(s.length for s in series)} rows over "
        f"{len(series)} units, {len(labels)} corrupted spans")
    return {"units": len(series), "corrupted_spans": len(labels),
            "data": str(out / "data.csv")}


def run_prune(cfg: PipelineConfig, log=print) -> dict:
    """Two-stage pruning exactly in the pipeline order: causal fidelity
    first, GMM posterior screening (with optimized threshold) second.

    Writes the per-window prune index, fidelity and screening reports,
    the GMM model and the chosen threshold; returns the summary."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = _load_prepared(cfg, cfg.train_data)
    windows = make_windows_all(series, cfg.window, cfg.stride)
    if len(windows) == 0:
        raise ValueError("no windows: series shorter than the window length")
    write_window_index(windows, out / "window_index.jsonl")
    all_ids = [w.window_id for w in windows]

    mse_by_id: dict[str, float] = {}
    q_by_id: dict[str, float] = {}
    theta = None
    if cfg.arm == "full":
        retained = set(all_ids)
    elif cfg.arm == "sub":
        retained = set(all_ids[:: cfg.sub_stride])
    else:
        stage1 = prune_causal_series(windows, series, cfg.causal)
        mse_by_id = {r.window_id: r.mse for r in stage1.records}
        retained = set(stage1.retained_ids)
        _write_jsonl(out / "fidelity_report.jsonl",
                     [{"window_id": r.window_id, "unit": r.unit_id,
                       "rul_level": r.rul_level, "start": r.start,
                       "mse": r.mse, "threshold": r.threshold,
                       "retained": r.retained} for r in stage1.records])
        if cfg.arm == "cg":
            survivors = [w for w in windows if w.window_id in retained]
            if len(survivors) >= 4:
                feats = features_matrix(survivors, cfg.screen)
                gmm = fit_gmm(feats, cfg.screen, seed=stage_seed(cfg.seed, "gmm"))
                q = posterior_hq_batch(feats, gmm)
                thr = optimize_threshold(q, feats, cfg.screen,
                                         budget=cfg.bo_budget,
                                         seed=stage_seed(cfg.seed, "bo"))
                theta = thr.theta
                ids = [w.window_id for w in survivors]
                q_by_id = dict(zip(ids, (float(v) for v in q)))
                retained = set(prune_quality(ids, q, theta))
                export_gmm(gmm, out / "gmm.json")
                with open(out / "threshold.json", "w") as fh:
                    json.dump({"theta": thr.theta, "objective": thr.objective,
                               "lam": thr.lam}, fh)
                _write_jsonl(out / "screening_report.jsonl",
                             [{"window_id": wid, "f": list(map(float, fv)),
                               "q": qv, "retained": wid in retained}
                              for wid, fv, qv in zip(ids, feats, q_by_id.values())])

    index = [{"window_id": w.window_id, "unit": w.unit_id,
              "rul_level": w.rul_level, "start": w.start,
              "mse_causal": mse_by_id.get(w.window_id),
              "q": q_by_id.get(w.window_id),
              "retained": w.window_id in retained} for w in windows]
    _write_jsonl(out / "prune_index.jsonl", index)

    stats = retention_stats(index)
    summary = {"arm": cfg.arm, "full": stats.full_count,
               "retained": stats.retained_count, "fraction": stats.fraction,
               "removed_stage1": stats.removed_stage1,
               "removed_stage2": stats.removed_stage2, "theta": theta}
    log(f"prune[{cfg.arm}]: retained {stats.retained_count}/{stats.full_count}"
        f" ({stats.fraction:.1%}); stage1 removed {stats.removed_stage1},"
        f" stage2 removed {stats.removed_stage2}")
    if stats.retained_count == 0:
        print("warning: empty retained set", file=sys.stderr)
        summary["empty"] = True
    return summary


def _dataset(cfg: PipelineConfig, windows, params: NormalizerParams):
    x = np.stack([normalize_values(w.sensor_values, params) for w in windows])
    y = np.array([w.label for w in windows], dtype=np.float64)
    if cfg.train.rul_cap is not None:
        y = np.minimum(y, cfg.train.rul_cap)
    return x, y / cfg.train.label_scale


def _predictor_config(cfg: PipelineConfig, channels: int) -> PredictorConfig:
    d = dict(cfg.predictor)
    d.setdefault("input_channels", channels)
    d.setdefault("seq_len", cfg.window)
    return PredictorConfig.from_dict(d)


def _save_normalizer(params: NormalizerParams, path) -> None:
    with open(path, "w") as fh:
        json.dump({"lo": params.lo.tolist(), "hi": params.hi.tolist()}, fh)


def _load_normalizer(path) -> NormalizerParams:
    with open(path) as fh:
        d = json.load(fh)
    return NormalizerParams(np.array(d["lo"]), np.array(d["hi"]))


def run_train(cfg: PipelineConfig, log=print) -> dict:
    """Pretrain from scratch on the source dataset (all windows)."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = cfg.source_data or cfg.train_data
    series = _load_prepared(cfg, data_path)
    windows = make_windows_all(series, cfg.window, cfg.stride)
    params = fit_normalizer(series)
    _save_normalizer(params, out / "source_normalizer.json")
    x, y = _dataset(cfg, list(windows), params)
    model = init_model(_predictor_config(cfg, x.shape[2]),
                       seed=stage_seed(cfg.seed, "train"))
    tc = TrainConfig.from_dict({**cfg.train.__dict__,
                                "seed": stage_seed(cfg.seed, "train")})
    model, history = train(model, x, y, tc)
    save_checkpoint(model, out / "checkpoint.json", seed=cfg.seed)
    export_history(history, out / "history.jsonl")
    log(f"train: {len(history)} epochs on {x.shape[0]} windows; "
        f"best val {min(h['val_loss'] for h in history):.5f}")
    return {"epochs": len(history), "windows": int(x.shape[0]),
            "checkpoint": str(out / "checkpoint.json")}


def _retained_windows(windows, index_path):
    keep = {r["window_id"] for r in read_jsonl(index_path) if r["retained"]}
    return [w for w in windows if w.window_id in keep]


def run_finetune(cfg: PipelineConfig, checkpoint_path, index_path=None,
                 log=print) -> dict:
    """Fine-tune a pretrained checkpoint on the (optionally pruned) target
    training data, freezing the first ``freeze_first`` layers."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = _load_prepared(cfg, cfg.train_data)
    windows = list(make_windows_all(series, cfg.window, cfg.stride))
    if index_path is not None:
        windows = _retained_windows(windows, index_path)
    if not windows:
        raise ValueError("no training windows after pruning")
    params = fit_normalizer(series)
    _save_normalizer(params, out / "normalizer.json")
    x, y = _dataset(cfg, windows, params)
    model = load_checkpoint(checkpoint_path)
    tc = TrainConfig.from_dict({**cfg.train.__dict__,
                                "seed": stage_seed(cfg.seed, "finetune")})
    model, history = finetune(model, x, y, tc)
    save_checkpoint(model, out / "finetuned.json", seed=cfg.seed)
    export_history(history, out / "finetune_history.jsonl")
    log(f"finetune: {len(history)} epochs on {x.shape[0]} windows; "
        f"best val {min(h['val_loss'] for h in history):.5f}")
    return {"epochs": len(history), "windows": int(x.shape[0]),
            "checkpoint": str(out / "finetuned.json"),
            "history": history}


def run_eval(cfg: PipelineConfig, checkpoint_path, normalizer_path,
             prune_index_path=None, log=print) -> EvalReport:
    """RMSE and NASA score on the held-out test data, plus per-unit
    full-trajectory prediction traces."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = _load_prepared(cfg, cfg.test_data)
    windows = list(make_windows_all(series, cfg.window, cfg.stride))
    if not windows:
        raise ValueError("test data produced no windows")
    params = _load_normalizer(normalizer_path)
    model = load_checkpoint(checkpoint_path)
    x, _ = _dataset(cfg, windows, params)
    if x.shape[2] != model.config.input_channels:
        raise ValueError(
            f"checkpoint expects {model.config.input_channels} channels, "
            f"test data has {x.shape[2]}")
    preds = predict(model, x) * cfg.train.label_scale
    labels = np.array([w.label for w in windows])
    if cfg.train.rul_cap is not None:
        labels = np.minimum(labels, cfg.train.rul_cap)
    fraction = 1.0
    if prune_index_path is not None:
        fraction = retention_stats(read_jsonl(prune_index_path)).fraction
    report = EvalReport(rmse=rmse(preds, labels),
                        nasa_score=nasa_score(preds, labels),
                        n=len(windows), retention_fraction=fraction)
    export_report(report, out / "eval_report.json")
    _write_jsonl(out / "traces.jsonl",
                 [{"unit": w.unit_id, "start": w.start, "label": float(lab),
                   "pred": float(p)}
                  for w, lab, p in zip(windows, labels, preds)])
    log(f"eval: rmse={report.rmse:.4f} score={report.nasa_score:.4f} "
        f"n={report.n}")
    return report


def run_report(out_dir, seed: int = 0, log=print) -> dict:
    """Retention statistics, separability diagnostic and per-feature
    histogram summary from a prune run's artifacts."""
    out = Path(out_dir)
    index = read_jsonl(out / "prune_index.jsonl")
    stats = retention_stats(index)
    result = {"full": stats.full_count, "retained": stats.retained_count,
              "fraction": stats.fraction,
              "removed_stage1": stats.removed_stage1,
              "removed_stage2": stats.removed_stage2}
    screen_path = out / "screening_report.jsonl"
    if screen_path.exists():
        rows = read_jsonl(screen_path)
        feats = np.array([r["f"] for r in rows])
        flags = np.array([r["retained"] for r in rows], dtype=bool)
        if 2 <= flags.sum() <= len(flags) - 2:
            acc = separability(feats[flags], feats[~flags], seed=seed)
            result["separability_accuracy"] = acc
            export_scatter(pca_projection(feats), flags, out / "scatter.jsonl")
        hists = {}
        for dim, name in enumerate(("std", "mean", "entropy")):
            lo, hi = feats[:, dim].min(), feats[:, dim].max()
            kept, edges = np.histogram(feats[flags, dim], bins=12,
                                       range=(lo, hi))
            dropped, _ = np.histogram(feats[~flags, dim], bins=12,
                                      range=(lo, hi))
            hists[name] = {"edges": edges.tolist(), "retained": kept.tolist(),
                           "discarded": dropped.tolist()}
        result["feature_histograms"] = hists
    with open(out / "report.json", "w") as fh:
        json.dump(result, fh)
    log(f"report: retention {stats.fraction:.1%}"
        + (f", separability {result['separability_accuracy']:.3f}"
           if result.get("separability_accuracy") is not None else ""))
    return result
