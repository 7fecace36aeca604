"""Decoder-only transformer RUL regressor in plain numpy.

Signal embedding -> [post-norm residual blocks of causal multi-head
attention and ReLU FFN] -> global average pooling -> 3-layer MLP head.
Backpropagation is hand-written (the finite-difference check in the test
suite is the module's numerical gate), training is plain SGD with a fixed
learning rate, and fine-tuning freezes the first L_f layers while
anchoring trainable parameters to the pretrained values with an l2 term.

No positional embeddings: sequential ordering enters through the causal
mask alone.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

LN_EPS = 1e-5


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class PredictorConfig:
    input_channels: int
    embed_dim: int = 64       # paper-scale reference: 1024
    heads: int = 4
    layers: int = 4           # paper-scale reference: 24
    ffn_dim: int | None = None
    head_dim1: int = 50
    head_dim2: int = 10
    seq_len: int = 50

    def __post_init__(self):
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.embed_dim
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        for v in (self.input_channels, self.embed_dim, self.heads, self.layers,
                  self.ffn_dim, self.head_dim1, self.head_dim2, self.seq_len):
            if v < 1:
                raise ValueError("all dimensions must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        keys = ("input_channels", "embed_dim", "heads", "layers", "ffn_dim",
                "head_dim1", "head_dim2", "seq_len")
        return cls(**{k: d[k] for k in keys if k in d})

    def to_dict(self) -> dict:
        return {"input_channels": self.input_channels, "embed_dim": self.embed_dim,
                "heads": self.heads, "layers": self.layers, "ffn_dim": self.ffn_dim,
                "head_dim1": self.head_dim1, "head_dim2": self.head_dim2,
                "seq_len": self.seq_len}


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    max_epochs: int = 100
    warmup_epochs: int = 10
    patience: int = 10
    val_fraction: float = 0.1
    beta: float = 0.0
    freeze_first: int = 0
    seed: int = 0
    label_scale: float = 1.0
    rul_cap: float | None = None

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        keys = ("learning_rate", "batch_size", "max_epochs", "warmup_epochs",
                "patience", "val_fraction", "beta", "freeze_first", "seed",
                "label_scale", "rul_cap")
        return cls(**{k: d[k] for k in keys if k in d})


class PredictorModel:
    """Parameter container; ``params`` maps names to float64 arrays and
    ``frozen`` holds parameter-group names excluded from updates."""

    def __init__(self, config: PredictorConfig, params: dict[str, np.ndarray],
                 frozen: frozenset[str] = frozenset()):
        self.config = config
        self.params = params
        self.frozen = frozenset(frozen)

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.config,
                              {k: v.copy() for k, v in self.params.items()},
                              self.frozen)

    def group_of(self, name: str) -> str:
        return name.split(".", 1)[0] if not name.startswith("layers.") \
            else "layer" + name.split(".")[1]

    def trainable(self, name: str) -> bool:
        return self.group_of(name) not in self.frozen


def init_model(config: PredictorConfig, seed: int = 0) -> PredictorModel:
    """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for
    weights; zero biases; unit layer-norm gains."""
    rng = np.random.default_rng(seed)

    def u(shape, fan_in):
        b = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-b, b, size=shape)

    d, c, f = config.embed_dim, config.input_channels, config.ffn_dim
    p: dict[str, np.ndarray] = {
        "embed.W": u((d, c), c), "embed.b": np.zeros(d)}
    for i in range(config.layers):
        pre = f"layers.{i}."
        for w in ("Wq", "Wk", "Wv", "Wo"):
            p[pre + w] = u((d, d), d)
        p[pre + "ffn_W1"] = u((d, f), d)
        p[pre + "ffn_b1"] = np.zeros(f)
        p[pre + "ffn_W2"] = u((f, d), f)
        p[pre + "ffn_b2"] = np.zeros(d)
        for g in ("ln1", "ln2"):
            p[pre + g + "_g"] = np.ones(d)
            p[pre + g + "_b"] = np.zeros(d)
    d1, d2 = config.head_dim1, config.head_dim2
    p["head.W1"] = u((d, d1), d)
    p["head.b1"] = np.zeros(d1)
    p["head.W2"] = u((d1, d2), d1)
    p["head.b2"] = np.zeros(d2)
    p["head.W3"] = u((d2, 1), d2)
    p["head.b3"] = np.zeros(1)
    return PredictorModel(config, p)


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def embed_signal(x: np.ndarray, w_e: np.ndarray, b_e: np.ndarray) -> np.ndarray:
    """Row-wise affine map E = X W_e^T + b_e."""
    if x.shape[-1] != w_e.shape[1]:
        raise ValueError("input channels do not match embedding matrix")
    return x @ w_e.T + b_e


def _softmax_last(s: np.ndarray) -> np.ndarray:
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    return e / e.sum(axis=-1, keepdims=True)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
              causal_mask: bool = True) -> np.ndarray:
    """Scaled dot-product attention on (L, d_k) matrices; with the causal
    mask, position t attends to positions <= t."""
    if q.shape != k.shape or k.shape != v.shape:
        raise ValueError("Q, K, V must share a shape")
    dk = q.shape[-1]
    s = q @ k.T / math.sqrt(dk)
    if causal_mask:
        s = np.where(np.triu(np.ones(s.shape, dtype=bool), k=1), -np.inf, s)
    return _softmax_last(s) @ v


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray
               ) -> np.ndarray:
    out, _ = _layer_norm_f(x, gain, bias)
    return out


def _layer_norm_f(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    iv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * iv
    return gain * xhat + bias, (xhat, iv)


def _layer_norm_b(dout, cache, gain):
    xhat, iv = cache
    dg = (dout * xhat).sum(axis=tuple(range(dout.ndim - 1)))
    db = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * gain
    dx = iv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
               - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _split_heads(x, heads):
    b, l, d = x.shape
    return x.reshape(b, l, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dk)


def mha(x: np.ndarray, layer_params: dict[str, np.ndarray], heads: int,
        causal_mask: bool = True) -> np.ndarray:
    """Multi-head attention on a single (L, D) input (no residual)."""
    out, _ = _mha_f(x[None], layer_params, heads, causal_mask)
    return out[0]


def _mha_f(x, p, heads, causal_mask=True):
    q = _split_heads(x @ p["Wq"], heads)
    k = _split_heads(x @ p["Wk"], heads)
    v = _split_heads(x @ p["Wv"], heads)
    dk = q.shape[-1]
    s = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dk)
    if causal_mask:
        l = s.shape[-1]
        s = np.where(np.triu(np.ones((l, l), dtype=bool), k=1), -np.inf, s)
    att = _softmax_last(s)
    o = _merge_heads(att @ v)
    return o @ p["Wo"], (x, q, k, v, att, o)


def _mha_b(da, cache, p, heads, grads, prefix):
    x, q, k, v, att, o = cache
    dk = q.shape[-1]
    grads[prefix + "Wo"] += np.einsum("bld,ble->de", o, da)
    do = _split_heads(da @ p["Wo"].T, heads)
    datt = do @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ do
    ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
    ds /= math.sqrt(dk)
    dq = ds @ k
    dkk = ds.transpose(0, 1, 3, 2) @ q
    dqm, dkm, dvm = (_merge_heads(a) for a in (dq, dkk, dv))
    dx = np.zeros_like(x)
    for name, dout in (("Wq", dqm), ("Wk", dkm), ("Wv", dvm)):
        grads[prefix + name] += np.einsum("bld,ble->de", x, dout)
        dx += dout @ p[name].T
    return dx


def _layer_f(x, params, i, heads):
    pre = f"layers.{i}."
    p = {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}
    a, mha_cache = _mha_f(x, p, heads)
    x1, ln1_cache = _layer_norm_f(x + a, p["ln1_g"], p["ln1_b"])
    z1 = x1 @ p["ffn_W1"] + p["ffn_b1"]
    h1 = np.maximum(z1, 0.0)
    f = h1 @ p["ffn_W2"] + p["ffn_b2"]
    x2, ln2_cache = _layer_norm_f(x1 + f, p["ln2_g"], p["ln2_b"])
    return x2, (p, mha_cache, ln1_cache, x1, z1, h1, ln2_cache)


def _layer_b(dx2, cache, i, heads, grads):
    pre = f"layers.{i}."
    p, mha_cache, ln1_cache, x1, z1, h1, ln2_cache = cache
    dr2, dg2, db2 = _layer_norm_b(dx2, ln2_cache, p["ln2_g"])
    grads[pre + "ln2_g"] += dg2
    grads[pre + "ln2_b"] += db2
    df = dr2
    grads[pre + "ffn_W2"] += np.einsum("blf,bld->fd", h1, df)
    grads[pre + "ffn_b2"] += df.sum(axis=(0, 1))
    dz1 = (df @ p["ffn_W2"].T) * (z1 > 0)
    grads[pre + "ffn_W1"] += np.einsum("bld,blf->df", x1, dz1)
    grads[pre + "ffn_b1"] += dz1.sum(axis=(0, 1))
    dx1 = dr2 + dz1 @ p["ffn_W1"].T
    dr1, dg1, db1 = _layer_norm_b(dx1, ln1_cache, p["ln1_g"])
    grads[pre + "ln1_g"] += dg1
    grads[pre + "ln1_b"] += db1
    dx = dr1 + _mha_b(dr1, mha_cache, p, heads, grads, pre)
    return dx


def forward_batch(model: PredictorModel, x: np.ndarray):
    """Forward pass on (B, L, C); returns predictions and the cache
    (final pre-pooling representation included)."""
    p = model.params
    if x.ndim != 3 or x.shape[2] != model.config.input_channels:
        raise ValueError("input must be (B, L, C) with C = input_channels")
    e = embed_signal(x, p["embed.W"], p["embed.b"])
    h = e
    layer_caches = []
    for i in range(model.config.layers):
        h, cache = _layer_f(h, p, i, model.config.heads)
        layer_caches.append(cache)
    hbar = h.mean(axis=1)
    a1 = hbar @ p["head.W1"] + p["head.b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ p["head.W2"] + p["head.b2"]
    h2 = np.maximum(a2, 0.0)
    yhat = (h2 @ p["head.W3"]).ravel() + p["head.b3"][0]
    cache = {"x": x, "layers": layer_caches, "final_h": h, "hbar": hbar,
             "a1": a1, "h1": h1, "a2": a2, "h2": h2}
    return yhat, cache


def transformer_forward(model: PredictorModel, x: np.ndarray) -> float:
    """Scalar prediction for a single (L, C) window."""
    yhat, _ = forward_batch(model, np.asarray(x, dtype=np.float64)[None])
    return float(yhat[0])


def predict(model: PredictorModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = []
    for i in range(0, x.shape[0], batch_size):
        yhat, _ = forward_batch(model, x[i:i + batch_size])
        out.append(yhat)
    return np.concatenate(out) if out else np.empty(0)


def loss_total(preds, labels, params_adapt: dict, params_anchor: dict,
               beta: float) -> float:
    """Batch MSE plus beta * squared l2 distance between the adapted and
    anchor parameter groups."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must align")
    loss = float(np.mean((preds - labels) ** 2))
    if beta:
        for k, v in params_adapt.items():
            d = v - params_anchor[k]
            loss += beta * float((d * d).sum())
    return loss


def backward(model: PredictorModel, x: np.ndarray, y: np.ndarray,
             anchor: dict[str, np.ndarray] | None = None, beta: float = 0.0):
    """Loss and exact gradients for one batch; frozen groups get zero
    gradient and are excluded from the anchor term."""
    if x.shape[0] == 0:
        raise ValueError("backward needs a nonempty batch")
    p = model.params
    yhat, cache = forward_batch(model, x)
    b = x.shape[0]
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    adapt = {k: p[k] for k in p if model.trainable(k)} if beta else {}
    loss = loss_total(yhat, y, adapt, anchor or {}, beta)
    if beta:
        for k in adapt:
            grads[k] += 2.0 * beta * (p[k] - anchor[k])

    dy = 2.0 * (yhat - y) / b
    grads["head.W3"] += cache["h2"].T @ dy[:, None]
    grads["head.b3"] += np.array([dy.sum()])
    dh2 = dy[:, None] @ p["head.W3"].T
    da2 = dh2 * (cache["a2"] > 0)
    grads["head.W2"] += cache["h1"].T @ da2
    grads["head.b2"] += da2.sum(axis=0)
    da1 = (da2 @ p["head.W2"].T) * (cache["a1"] > 0)
    grads["head.W1"] += cache["hbar"].T @ da1
    grads["head.b1"] += da1.sum(axis=0)
    dhbar = da1 @ p["head.W1"].T
    l = x.shape[1]
    dh = np.repeat(dhbar[:, None, :], l, axis=1) / l
    for i in range(model.config.layers - 1, -1, -1):
        dh = _layer_b(dh, cache["layers"][i], i, model.config.heads, grads)
    grads["embed.W"] += np.einsum("blc,bld->dc", x, dh)
    grads["embed.b"] += dh.sum(axis=(0, 1))

    for k in grads:
        if not model.trainable(k):
            grads[k][:] = 0.0
    return loss, grads


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _epoch_batches(order: np.ndarray, batch_size: int):
    for i in range(0, order.shape[0], batch_size):
        yield order[i:i + batch_size]


def _train_loop(model: PredictorModel, x: np.ndarray, y: np.ndarray,
                config: TrainConfig, anchor: dict[str, np.ndarray]):
    n = x.shape[0]
    if n < 2:
        raise ValueError("training needs at least two samples")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    xv, yv = x[val_idx], y[val_idx]
    xt, yt = x[tr_idx], y[tr_idx]

    work = model.copy()
    best_params = {k: v.copy() for k, v in work.params.items()}
    best_val = np.inf
    since_improve = 0
    history: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(xt.shape[0])
        loss_sum = 0.0
        for batch in _epoch_batches(order, config.batch_size):
            loss, grads = backward(work, xt[batch], yt[batch],
                                   anchor=anchor, beta=config.beta)
            loss_sum += loss * batch.shape[0]
            lr = config.learning_rate
            for k, g in grads.items():
                if work.trainable(k):
                    work.params[k] -= lr * g
        train_loss = loss_sum / xt.shape[0]
        val_loss = float(np.mean((predict(work, xv) - yv) ** 2))
        history.append({"epoch": epoch, "train_loss": float(train_loss),
                        "val_loss": val_loss,
                        "seconds": time.perf_counter() - t0})
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in work.params.items()}
            since_improve = 0
        elif epoch > config.warmup_epochs:
            since_improve += 1
            if since_improve >= config.patience:
                break
    return PredictorModel(work.config, best_params, work.frozen), history


def train(model: PredictorModel, x: np.ndarray, y: np.ndarray,
          config: TrainConfig):
    """Seeded 90/10 split, SGD with fixed learning rate, 10-epoch warm-up
    then early stop after ``patience`` epochs without validation
    improvement; returns the minimum-validation-MSE checkpoint."""
    anchor = {k: v.copy() for k, v in model.params.items()} if config.beta else {}
    return _train_loop(model, x, y, config, anchor)


def finetune(pretrained: PredictorModel, x: np.ndarray, y: np.ndarray,
             config: TrainConfig):
    """Freeze the first ``freeze_first`` transformer layers, anchor the
    trainable parameters to the pretrained values, and run the training
    loop on the pruned dataset."""
    if config.freeze_first > pretrained.config.layers:
        raise ValueError("freeze_first exceeds layer count")
    frozen = frozenset(f"layer{i}" for i in range(config.freeze_first))
    model = PredictorModel(pretrained.config,
                           {k: v.copy() for k, v in pretrained.params.items()},
                           frozen)
    anchor = {k: v.copy() for k, v in pretrained.params.items()}
    return _train_loop(model, x, y, config, anchor)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_checkpoint(model: PredictorModel, path, seed: int | None = None) -> None:
    """Self-describing JSON checkpoint; load is value-exact."""
    doc = {"config": model.config.to_dict(), "seed": seed,
           "frozen": sorted(model.frozen),
           "params": {k: v.tolist() for k, v in model.params.items()}}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> PredictorModel:
    with open(path) as fh:
        doc = json.load(fh)
    config = PredictorConfig.from_dict(doc["config"])
    params = {k: np.array(v, dtype=np.float64) for k, v in doc["params"].items()}
    return PredictorModel(config, params, frozenset(doc.get("frozen", ())))


def export_history(history: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
