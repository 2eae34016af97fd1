"""Feed-forward rectifier MLP with sigmoid output, trained by Adam on cross-entropy."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .classifiers import Standardizer, evaluate, fit_preprocessor, preprocess, split_train_test

FORMAT_VERSION = 1
LAYER_DIMS = (24, 64, 32, 1)


class TrainingDiverged(RuntimeError):
    pass


class UnfittedModel(RuntimeError):
    pass


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list            # float32, shape (out, in)
    biases: list             # float32, shape (out,)
    pre: Standardizer = None
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise ValueError(f"layer {l} has shape {w.shape}/{b.shape}, expected {(dims[l + 1], dims[l])}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l} has non-finite parameters")
        self.layer_dims = dims

    @classmethod
    def zeros(cls, layer_dims=LAYER_DIMS, pre=None):
        d = layer_dims
        return cls(d, [np.zeros((d[i + 1], d[i]), np.float32) for i in range(len(d) - 1)],
                   [np.zeros(d[i + 1], np.float32) for i in range(len(d) - 1)], pre)

    @property
    def params64(self):
        return [np.asarray(w, dtype=np.float64) for w in self.weights], \
               [np.asarray(b, dtype=np.float64) for b in self.biases]


def init_params(layer_dims, rng):
    """Uniform init with limit sqrt(6 / fan_in)."""
    ws, bs = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        lim = math.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return ws, bs


def logits(ws, bs, Z):
    h = Z
    for l, (w, b) in enumerate(zip(ws, bs)):
        h = h @ w.T + b
        if l < len(ws) - 1:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def loss_and_grads(ws, bs, Z, y):
    """Mean binary cross-entropy and its gradients (float64 throughout)."""
    acts = [Z]
    pre_acts = []
    h = Z
    for l, (w, b) in enumerate(zip(ws, bs)):
        a = h @ w.T + b
        pre_acts.append(a)
        h = np.maximum(a, 0.0) if l < len(ws) - 1 else a
        acts.append(h)
    z = acts[-1][:, 0]
    y = np.asarray(y, dtype=float)
    # log(1 + exp(-|z|)) form keeps the loss finite for large logits
    loss = float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    n = len(y)
    p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    delta = ((p - y) / n)[:, None]
    gw, gb = [None] * len(ws), [None] * len(ws)
    for l in range(len(ws) - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ ws[l]) * (pre_acts[l - 1] > 0)
    return loss, gw, gb


def _balanced_accuracy(ws, bs, Z, y):
    return evaluate((logits(ws, bs, Z) >= 0).astype(np.int64), y).balanced_accuracy


def train_mlp(X, y, val_fraction=0.1, epochs=50, batch_size=256, lr=1e-3, seed=0,
              layer_dims=LAYER_DIMS, beta1=0.9, beta2=0.999, eps=1e-8) -> MlpModel:
    """Mini-batch Adam; keeps the epoch with the best validation balanced accuracy."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    if len(classes) == 2 and val_fraction > 0 and np.bincount(y).min() >= 2:
        tr, va = split_train_test(y, 1.0 - val_fraction, seed)
    else:
        tr, va = np.arange(len(y)), np.arange(len(y))
    pre = fit_preprocessor(X[tr])
    Z = preprocess(X, pre)
    Ztr, ytr, Zva, yva = Z[tr], y[tr], Z[va], y[va]

    ws, bs = init_params(layer_dims, rng)
    m = [np.zeros_like(p) for p in ws + bs]
    v = [np.zeros_like(p) for p in ws + bs]
    # ranked by validation balanced accuracy, then lower validation loss
    best = ((-1.0, 0.0), [w.copy() for w in ws], [b.copy() for b in bs])
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(ytr))
        for s in range(0, len(order), batch_size):
            bidx = order[s:s + batch_size]
            loss, gw, gb = loss_and_grads(ws, bs, Ztr[bidx], ytr[bidx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
            step += 1
            params = ws + bs
            for i, g in enumerate(gw + gb):
                m[i] = beta1 * m[i] + (1 - beta1) * g
                v[i] = beta2 * v[i] + (1 - beta2) * g * g
                mh = m[i] / (1 - beta1 ** step)
                vh = v[i] / (1 - beta2 ** step)
                params[i] -= lr * mh / (np.sqrt(vh) + eps)
        epoch_loss = loss_and_grads(ws, bs, Ztr, ytr)[0]
        if not math.isfinite(epoch_loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
        val_ba = _balanced_accuracy(ws, bs, Zva, yva)
        val_loss = loss_and_grads(ws, bs, Zva, yva)[0]
        history.append((epoch, epoch_loss, val_ba))
        if (val_ba, -val_loss) > best[0]:
            best = ((val_ba, -val_loss), [w.copy() for w in ws], [b.copy() for b in bs])
    _, ws, bs = best
    return MlpModel(tuple(layer_dims), [w.astype(np.float32) for w in ws],
                    [b.astype(np.float32) for b in bs], pre, history)


def forward(model: MlpModel, features):
    """Collision probability for one row or a batch of raw feature rows."""
    if model.pre is None:
        raise UnfittedModel("model has no preprocessing statistics; fit it first")
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    ws, bs = model.params64
    z = logits(ws, bs, preprocess(np.atleast_2d(X), model.pre))
    p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return float(p[0]) if single else p


def to_dict(model: MlpModel):
    return {
        "format_version": FORMAT_VERSION,
        "kind": "mlp",
        "layer_dims": list(model.layer_dims),
        "weights": [w.astype(np.float32).astype(float).tolist() for w in model.weights],
        "biases": [b.astype(np.float32).astype(float).tolist() for b in model.biases],
        "preprocess": {"mean": model.pre.mean.tolist(), "std": model.pre.std.tolist()},
    }


def from_dict(d) -> MlpModel:
    if d.get("kind") != "mlp":
        raise ValueError(f"not an MLP model file (kind={d.get('kind')!r})")
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported MLP format version {d.get('format_version')}")
    pre = Standardizer(np.asarray(d["preprocess"]["mean"]), np.asarray(d["preprocess"]["std"]))
    return MlpModel(tuple(d["layer_dims"]), [np.asarray(w, dtype=np.float32) for w in d["weights"]],
                    [np.asarray(b, dtype=np.float32) for b in d["biases"]], pre)


def save_mlp(model: MlpModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(model), fh, sort_keys=True)


def load_mlp(path) -> MlpModel:
    with open(path) as fh:
        return from_dict(json.load(fh))
