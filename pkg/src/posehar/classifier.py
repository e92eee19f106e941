"""Sequence classifier over channel stacks, written on plain numpy.

Two branches read the (channels, T) series in parallel:

* a convolutional branch: stacked blocks of same-padded 1D convolution,
  batch normalization, and ReLU, followed by global average pooling;
* a recurrent branch: an LSTM whose state only advances on valid steps,
  summarized by additive attention over the hidden states (or by the last
  valid hidden state when attention is off).

The two summaries are concatenated, passed through dropout (training only,
inverted scaling) and one affine layer, and normalized by softmax.

Variable-length batches are padded and carry a validity mask. Every part of
the network is masked so that padding cannot influence any output: block
activations are multiplied by the mask, batch-norm statistics cover valid
positions only, pooling divides by the true length, the LSTM holds its state
across padded steps, and attention gives padding zero weight. Training runs
Adam on softmax cross-entropy with early stopping on validation accuracy.

All arithmetic is float64.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import Diverged, NonFiniteLoss, ParseError, ShapeMismatch

log = logging.getLogger(__name__)

MODEL_FORMAT = "posehar-classifier/1"
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ClassifierConfig:
    """Architecture and training knobs.

    conv_blocks lists (filters, kernel width) per block. channels and
    classes have no defaults: they are properties of the data.
    """

    channels: int
    classes: int
    conv_blocks: tuple[tuple[int, int], ...] = ((64, 8), (128, 5), (64, 3))
    recurrent_units: int = 32
    attention: bool = True
    dropout: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    class_weighting: bool = False
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "conv_blocks",
                           tuple((int(f), int(k)) for f, k in self.conv_blocks))
        if self.channels < 1 or self.classes < 2:
            raise ValueError("need at least one channel and two classes")
        if not self.conv_blocks:
            raise ValueError("need at least one convolutional block")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.patience < 0 or self.max_epochs < 1:
            raise ValueError("patience must be >= 0 and max_epochs >= 1")

    @property
    def feature_dim(self) -> int:
        return self.conv_blocks[-1][0] + self.recurrent_units


@dataclass
class ClassifierModel:
    config: ClassifierConfig
    params: dict[str, np.ndarray]
    running: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class PaddedBatch:
    """Zero-padded series with a validity mask (1 on real steps)."""

    series: np.ndarray          # (B, C, T)
    mask: np.ndarray            # (B, T) float64
    labels: np.ndarray | None   # (B,) int or None


def pad_batch(series: Sequence[np.ndarray],
              labels: Sequence[int] | None = None) -> PaddedBatch:
    """Stack (C, T_i) arrays into one zero-padded batch."""
    if not series:
        raise ValueError("empty batch")
    channels = series[0].shape[0]
    length = 0
    for s in series:
        if s.ndim != 2 or s.shape[0] != channels:
            raise ShapeMismatch(f"every series must be ({channels}, T), got {s.shape}")
        if s.shape[1] < 1:
            raise ShapeMismatch("series must have at least one step")
        length = max(length, s.shape[1])
    out = np.zeros((len(series), channels, length))
    mask = np.zeros((len(series), length))
    for b, s in enumerate(series):
        out[b, :, : s.shape[1]] = s
        mask[b, : s.shape[1]] = 1.0
    y = None if labels is None else np.asarray(labels, dtype=np.intp)
    return PaddedBatch(out, mask, y)


# --------------------------------------------------------------------------
# Initialization


def _glorot(rng: np.random.Generator, shape: tuple[int, ...],
            fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_model(config: ClassifierConfig) -> ClassifierModel:
    """Seeded parameter initialization; a fixed seed fixes every draw."""
    rng = np.random.default_rng(config.rng_seed)
    params: dict[str, np.ndarray] = {}
    running: dict[str, np.ndarray] = {}
    cin = config.channels
    for i, (filters, kernel) in enumerate(config.conv_blocks):
        params[f"conv{i}_w"] = _glorot(rng, (filters, cin, kernel),
                                       cin * kernel, filters * kernel)
        params[f"conv{i}_b"] = np.zeros(filters)
        params[f"bn{i}_gamma"] = np.ones(filters)
        params[f"bn{i}_beta"] = np.zeros(filters)
        running[f"bn{i}_mean"] = np.zeros(filters)
        running[f"bn{i}_var"] = np.ones(filters)
        cin = filters
    units = config.recurrent_units
    params["lstm_wx"] = _glorot(rng, (config.channels, 4 * units),
                                config.channels, 4 * units)
    params["lstm_wh"] = _glorot(rng, (units, 4 * units), units, 4 * units)
    bias = np.zeros(4 * units)
    bias[units : 2 * units] = 1.0   # forget gate starts open
    params["lstm_b"] = bias
    if config.attention:
        params["attn_v"] = rng.normal(0.0, 1.0 / np.sqrt(units), units)
    params["out_w"] = _glorot(rng, (config.feature_dim, config.classes),
                              config.feature_dim, config.classes)
    params["out_b"] = np.zeros(config.classes)
    return ClassifierModel(config, params, running)


# --------------------------------------------------------------------------
# Forward pieces


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _conv_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Same-padded 1D convolution of (B, C, T) with (F, C, K) weights.

    Returns the output and the padded input (kept for the backward pass).
    """
    kernel = w.shape[2]
    left = (kernel - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (left, kernel - 1 - left)))
    T = x.shape[2]
    y = np.zeros((x.shape[0], w.shape[0], T))
    for k in range(kernel):
        y += np.matmul(w[:, :, k], xp[:, :, k : k + T])
    return y + b[None, :, None], xp


def _conv_backward(dy: np.ndarray, xp: np.ndarray, w: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    kernel = w.shape[2]
    T = dy.shape[2]
    left = (kernel - 1) // 2
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for k in range(kernel):
        dw[:, :, k] = np.tensordot(dy, xp[:, :, k : k + T], axes=((0, 2), (0, 2)))
        dxp[:, :, k : k + T] += np.matmul(w[:, :, k].T, dy)
    db = dy.sum(axis=(0, 2))
    return dw, db, dxp[:, :, left : left + T]


def _bn_train(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
              mask3: np.ndarray, count: float):
    mean = (x * mask3).sum(axis=(0, 2)) / count
    centered = x - mean[None, :, None]
    var = (centered * centered * mask3).sum(axis=(0, 2)) / count
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = centered * inv_std[None, :, None]
    y = gamma[None, :, None] * xhat + beta[None, :, None]
    return y, (xhat, inv_std, gamma, mask3, count), (mean, var)


def _bn_eval(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
             mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    return gamma[None, :, None] * (x - mean[None, :, None]) * inv_std[None, :, None] \
        + beta[None, :, None]


def _bn_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # dy is zero at masked positions; the statistic sums therefore already
    # run over valid positions only.
    xhat, inv_std, gamma, mask3, count = cache
    dgamma = (dy * xhat).sum(axis=(0, 2))
    dbeta = dy.sum(axis=(0, 2))
    dxhat = dy * gamma[None, :, None]
    s1 = dxhat.sum(axis=(0, 2))
    s2 = (dxhat * xhat).sum(axis=(0, 2))
    dx = inv_std[None, :, None] * (dxhat - (s1[None, :, None] + xhat * s2[None, :, None]) / count)
    return dx * mask3, dgamma, dbeta


def _lstm_forward(x: np.ndarray, mask: np.ndarray, wx: np.ndarray, wh: np.ndarray,
                  b: np.ndarray, need_cache: bool):
    B, _, T = x.shape
    units = wh.shape[0]
    h = np.zeros((B, units))
    c = np.zeros((B, units))
    hidden = np.empty((B, T, units))
    cache = [] if need_cache else None
    for t in range(T):
        xt = x[:, :, t]
        gates = xt @ wx + h @ wh + b
        gi = _sigmoid(gates[:, :units])
        gf = _sigmoid(gates[:, units : 2 * units])
        gg = np.tanh(gates[:, 2 * units : 3 * units])
        go = _sigmoid(gates[:, 3 * units :])
        c_new = gf * c + gi * gg
        tc = np.tanh(c_new)
        h_new = go * tc
        m = mask[:, t : t + 1]
        if need_cache:
            cache.append((xt, h, c, gi, gf, gg, go, tc, m))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        hidden[:, t] = h
    return hidden, h, cache


def _lstm_backward(d_hidden: np.ndarray, d_last: np.ndarray, cache,
                   wx: np.ndarray, wh: np.ndarray):
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(wx.shape[1])
    dh = d_last.copy()
    dc = np.zeros_like(d_last)
    for t in range(len(cache) - 1, -1, -1):
        xt, h_prev, c_prev, gi, gf, gg, go, tc, m = cache[t]
        dht = d_hidden[:, t] + dh
        dh_new = m * dht
        dh_carry = (1.0 - m) * dht
        dc_new = m * dc
        dc_carry = (1.0 - m) * dc
        do = dh_new * tc
        dc_new = dc_new + dh_new * go * (1.0 - tc * tc)
        df = dc_new * c_prev
        di = dc_new * gg
        dg = dc_new * gi
        dgates = np.concatenate([
            di * gi * (1.0 - gi),
            df * gf * (1.0 - gf),
            dg * (1.0 - gg * gg),
            do * go * (1.0 - go),
        ], axis=1)
        dwx += xt.T @ dgates
        dwh += h_prev.T @ dgates
        db += dgates.sum(axis=0)
        dh = dh_carry + dgates @ wh.T
        dc = dc_carry + dc_new * gf
    return dwx, dwh, db


def _masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    masked = np.where(mask > 0, scores, -np.inf)
    shifted = masked - masked.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


def _forward(model: ClassifierModel, batch: PaddedBatch, train: bool,
             dropout_rng: np.random.Generator | None, need_cache: bool):
    config = model.config
    params = model.params
    x = batch.series
    if x.shape[1] != config.channels:
        raise ShapeMismatch(
            f"model expects {config.channels} channels, series has {x.shape[1]}")
    mask = batch.mask
    if (mask.sum(axis=1) < 1).any():
        raise ShapeMismatch("every sample needs at least one valid step")
    mask3 = mask[:, None, :]
    count = float(mask.sum())

    cache: dict = {"blocks": [], "batch_stats": []}
    a = x * mask3
    for i in range(len(config.conv_blocks)):
        z, xp = _conv_same(a, params[f"conv{i}_w"], params[f"conv{i}_b"])
        if train:
            u, bn_cache, stats = _bn_train(z, params[f"bn{i}_gamma"],
                                           params[f"bn{i}_beta"], mask3, count)
            cache["batch_stats"].append(stats)
        else:
            u = _bn_eval(z, params[f"bn{i}_gamma"], params[f"bn{i}_beta"],
                         model.running[f"bn{i}_mean"], model.running[f"bn{i}_var"])
            bn_cache = None
        relu_mask = u > 0
        a = np.where(relu_mask, u, 0.0) * mask3
        if need_cache:
            cache["blocks"].append((xp, bn_cache, relu_mask))
    counts = mask.sum(axis=1)
    pooled = (a * mask3).sum(axis=2) / counts[:, None]

    hidden, h_last, lstm_cache = _lstm_forward(
        x * mask3, mask, params["lstm_wx"], params["lstm_wh"], params["lstm_b"],
        need_cache)
    if config.attention:
        scores = hidden @ params["attn_v"]
        alpha = _masked_softmax(scores, mask)
        context = (alpha[:, :, None] * hidden).sum(axis=1)
    else:
        alpha = None
        context = h_last

    features = np.concatenate([pooled, context], axis=1)
    drop_mask = None
    if train and config.dropout > 0.0:
        if dropout_rng is None:
            raise ValueError("training forward with dropout needs a generator")
        drop_mask = (dropout_rng.random(features.shape) >= config.dropout) \
            / (1.0 - config.dropout)
        features = features * drop_mask
    logits = features @ params["out_w"] + params["out_b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)

    if need_cache:
        cache.update(a_last=a, mask=mask, counts=counts, hidden=hidden,
                     lstm=lstm_cache, alpha=alpha, features=features,
                     drop_mask=drop_mask, probs=probs, pooled_dim=pooled.shape[1])
    return probs, cache


def _cross_entropy(probs: np.ndarray, labels: np.ndarray,
                   class_weights: np.ndarray | None) -> tuple[float, np.ndarray]:
    B = probs.shape[0]
    picked = np.clip(probs[np.arange(B), labels], 1e-300, None)
    ce = -np.log(picked)
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(B), labels] = 1.0
    if class_weights is None:
        loss = float(ce.mean())
        dlogits = (probs - one_hot) / B
    else:
        w = class_weights[labels]
        total = float(w.sum())
        loss = float((w * ce).sum() / total)
        dlogits = (probs - one_hot) * (w / total)[:, None]
    return loss, dlogits


def loss_and_grad(model: ClassifierModel, batch: PaddedBatch,
                  dropout_rng: np.random.Generator | None = None,
                  class_weights: np.ndarray | None = None):
    """Training-mode loss, analytic gradients, and the batch-norm statistics
    of this batch (for the running-average update)."""
    if batch.labels is None:
        raise ValueError("loss needs labels")
    config = model.config
    params = model.params
    probs, cache = _forward(model, batch, train=True, dropout_rng=dropout_rng,
                            need_cache=True)
    loss, dlogits = _cross_entropy(probs, batch.labels, class_weights)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss!r}")

    grads: dict[str, np.ndarray] = {}
    features = cache["features"]
    grads["out_w"] = features.T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ params["out_w"].T
    if cache["drop_mask"] is not None:
        dfeat = dfeat * cache["drop_mask"]
    split = cache["pooled_dim"]
    dpooled = dfeat[:, :split]
    dcontext = dfeat[:, split:]

    # Recurrent branch.
    hidden = cache["hidden"]
    mask = cache["mask"]
    if config.attention:
        alpha = cache["alpha"]
        v = params["attn_v"]
        dalpha = np.einsum("bu,btu->bt", dcontext, hidden)
        d_hidden = alpha[:, :, None] * dcontext[:, None, :]
        dscores = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
        grads["attn_v"] = np.einsum("bt,btu->u", dscores, hidden)
        d_hidden += dscores[:, :, None] * v[None, None, :]
        d_last = np.zeros_like(dcontext)
    else:
        d_hidden = np.zeros_like(hidden)
        d_last = dcontext
    dwx, dwh, db = _lstm_backward(d_hidden, d_last, cache["lstm"],
                                  params["lstm_wx"], params["lstm_wh"])
    grads["lstm_wx"] = dwx
    grads["lstm_wh"] = dwh
    grads["lstm_b"] = db

    # Convolutional branch.
    mask3 = mask[:, None, :]
    da = dpooled[:, :, None] * mask3 / cache["counts"][:, None, None]
    for i in range(len(config.conv_blocks) - 1, -1, -1):
        xp, bn_cache, relu_mask = cache["blocks"][i]
        du = da * mask3 * relu_mask
        dz, dgamma, dbeta = _bn_backward(du, bn_cache)
        grads[f"bn{i}_gamma"] = dgamma
        grads[f"bn{i}_beta"] = dbeta
        dw, dbias, da = _conv_backward(dz, xp, params[f"conv{i}_w"])
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = dbias
    return loss, grads, cache["batch_stats"]


def batch_loss(model: ClassifierModel, batch: PaddedBatch,
               class_weights: np.ndarray | None = None) -> float:
    """Training-mode loss without gradients (used by finite differencing)."""
    if batch.labels is None:
        raise ValueError("loss needs labels")
    probs, _ = _forward(model, batch, train=True, dropout_rng=None, need_cache=False)
    loss, _ = _cross_entropy(probs, batch.labels, class_weights)
    return loss


# --------------------------------------------------------------------------
# Prediction


def predict_proba(model: ClassifierModel, series: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluation-mode class probabilities for a list of (C, T) series."""
    out = []
    step = max(int(model.config.batch_size), 1)
    for start in range(0, len(series), step):
        batch = pad_batch(series[start : start + step])
        probs, _ = _forward(model, batch, train=False, dropout_rng=None,
                            need_cache=False)
        out.append(probs)
    return np.vstack(out)


def predict(model: ClassifierModel, series: Sequence[np.ndarray]) -> np.ndarray:
    """Predicted class indices; exact ties resolve to the lowest index."""
    return predict_proba(model, series).argmax(axis=1)


def accuracy(model: ClassifierModel, dataset: Sequence[tuple[np.ndarray, int]]) -> float:
    if not dataset:
        return 0.0
    labels = np.array([y for _, y in dataset])
    predicted = predict(model, [s for s, _ in dataset])
    return float((predicted == labels).mean())


# --------------------------------------------------------------------------
# Training


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m += (1.0 - ADAM_BETA1) * (g - m)
            v += (1.0 - ADAM_BETA2) * (g * g - v)
            params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def inverse_frequency_weights(labels: Sequence[int], classes: int) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=np.intp), minlength=classes)
    weights = np.where(counts > 0, len(labels) / (classes * np.maximum(counts, 1)), 0.0)
    return weights


def train(config: ClassifierConfig,
          train_set: Sequence[tuple[np.ndarray, int]],
          val_set: Sequence[tuple[np.ndarray, int]]
          ) -> tuple[ClassifierModel, list[dict]]:
    """Fit a model; returns it with the best-on-validation weights restored.

    The history holds one record per epoch with the mean training loss and
    the validation accuracy. Training stops early once validation accuracy
    has failed to improve for more than ``patience`` consecutive epochs.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    for s, y in list(train_set) + list(val_set):
        if s.shape[0] != config.channels:
            raise ShapeMismatch(
                f"series has {s.shape[0]} channels, model expects {config.channels}")
        if not 0 <= y < config.classes:
            raise ValueError(f"label {y} outside 0..{config.classes - 1}")

    model = init_model(config)
    optimizer = _Adam(model.params, config.learning_rate)
    rng = np.random.default_rng([config.rng_seed, 1])
    class_weights = None
    if config.class_weighting:
        class_weights = inverse_frequency_weights([y for _, y in train_set],
                                                  config.classes)

    best = {k: v.copy() for k, v in model.params.items()}
    best_running = {k: v.copy() for k, v in model.running.items()}
    best_accuracy = -1.0
    stale = 0
    history: list[dict] = []
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), config.batch_size):
            picked = order[start : start + config.batch_size]
            batch = pad_batch([train_set[i][0] for i in picked],
                              [train_set[i][1] for i in picked])
            loss, grads, stats = loss_and_grad(model, batch, dropout_rng=rng,
                                               class_weights=class_weights)
            optimizer.step(model.params, grads)
            for i, (mean, var) in enumerate(stats):
                model.running[f"bn{i}_mean"] *= BN_MOMENTUM
                model.running[f"bn{i}_mean"] += (1.0 - BN_MOMENTUM) * mean
                model.running[f"bn{i}_var"] *= BN_MOMENTUM
                model.running[f"bn{i}_var"] += (1.0 - BN_MOMENTUM) * var
            losses.append(loss)
            for value in model.params.values():
                if not np.isfinite(value).all():
                    raise Diverged("non-finite parameters after an update step")
        val_accuracy = accuracy(model, val_set)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_accuracy": val_accuracy})
        if val_accuracy > best_accuracy:
            best_accuracy = val_accuracy
            best = {k: v.copy() for k, v in model.params.items()}
            best_running = {k: v.copy() for k, v in model.running.items()}
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    model.params = best
    model.running = best_running
    return model, history


# --------------------------------------------------------------------------
# Persistence


def save_model(path: str | os.PathLike, model: ClassifierModel,
               actions: Sequence[str] | None = None) -> None:
    meta = {"format": MODEL_FORMAT, "config": asdict(model.config)}
    if actions is not None:
        meta["actions"] = list(actions)
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for key, value in model.params.items():
        arrays[f"param/{key}"] = value
    for key, value in model.running.items():
        arrays[f"running/{key}"] = value
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path: str | os.PathLike) -> tuple[ClassifierModel, list[str] | None]:
    """Load a model plus the action-name list stored with it, if any."""
    with np.load(path, allow_pickle=False) as data:
        try:
            meta = json.loads(str(data["meta"]))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: not a classifier model ({exc})") from exc
        if meta.get("format") != MODEL_FORMAT:
            raise ParseError(f"{path}: unsupported model format {meta.get('format')!r}")
        config = ClassifierConfig(**meta["config"])
        params = {}
        running = {}
        for key in data.files:
            if key.startswith("param/"):
                params[key[len("param/"):]] = data[key]
            elif key.startswith("running/"):
                running[key[len("running/"):]] = data[key]
    return ClassifierModel(config, params, running), meta.get("actions")
