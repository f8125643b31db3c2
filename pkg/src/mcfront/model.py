"""LSTM classification back end.

A uniformly initialized multi-layer LSTM over the stacked front-end
features, with a softmax output layer, trained on the cross-entropy
objective (Adam by default, plain SGD available). Forward and BPTT are
written out in numpy so the
gradients can be verified with finite differences and chained into the
front-end's hand-written backward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DomainError
from .frontend import FeatureTensor, GROUPS

INIT_RANGE = 0.05
FORGET_BIAS = 1.0
GRAD_CLIP = 5.0


@dataclass(frozen=True)
class AcousticModelConfig:
    num_layers: int = 2
    cells_per_layer: int = 64
    num_classes: int = 40
    input_dim: int = 192

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 1:
                raise DomainError(f"{name} must be positive, got {v}")

    @classmethod
    def paper_size(cls) -> "AcousticModelConfig":
        return cls(num_layers=5, cells_per_layer=768, num_classes=3183)


@dataclass
class TrainConfig:
    learning_rate: float = 3e-3
    batch_size: int = 4
    epochs: int = 80
    seed: int = 0
    optimizer: str = "adam"  # or "sgd"; both clip the global gradient norm
    # front-end layers start at a structured init worth preserving, so their
    # steps can be scaled down relative to the LSTM's
    frontend_lr_scale: float = 0.2
    # which parameter groups receive updates
    trainable_groups: dict = field(
        default_factory=lambda: {g: True for g in (*GROUPS, "lstm")}
    )

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise DomainError("hyperparameters must be positive")
        if self.frontend_lr_scale <= 0:
            raise DomainError("frontend_lr_scale must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LstmModel:
    """Stacked LSTM + softmax. Parameter gate order is (i, f, g, o)."""

    def __init__(self, cfg: AcousticModelConfig, layers, out_w, out_b):
        self.cfg = cfg
        self.layers = layers  # list of {"wx": [4H, Din], "wh": [4H, H], "b": [4H]}
        self.out_w = out_w  # [C, H]
        self.out_b = out_b  # [C]

    # -- parameter bookkeeping -------------------------------------------
    def param_items(self):
        for li, layer in enumerate(self.layers):
            for key in ("wx", "wh", "b"):
                yield f"layer{li}.{key}", layer[key]
        yield "out.w", self.out_w
        yield "out.b", self.out_b

    def num_params(self) -> int:
        return sum(int(np.prod(a.shape)) for _, a in self.param_items())

    def copy(self) -> "LstmModel":
        return LstmModel(
            self.cfg,
            [{k: v.copy() for k, v in layer.items()} for layer in self.layers],
            self.out_w.copy(),
            self.out_b.copy(),
        )

    def save(self, path):
        arrays = {name.replace(".", "_"): a for name, a in self.param_items()}
        np.savez(path, config=json.dumps(asdict(self.cfg)), **arrays)

    @classmethod
    def load(cls, path) -> "LstmModel":
        with np.load(path) as data:
            cfg = AcousticModelConfig(**json.loads(str(data["config"])))
            layers = [
                {k: data[f"layer{li}_{k}"] for k in ("wx", "wh", "b")}
                for li in range(cfg.num_layers)
            ]
            return cls(cfg, layers, data["out_w"], data["out_b"])

    # -- forward / backward ----------------------------------------------
    def forward(self, features, want_cache: bool = False):
        """Per-frame class posteriors, rows summing to 1."""
        if isinstance(features, FeatureTensor):
            if features.stage != "stacked":
                raise DomainError("model consumes stacked features")
            x = features.data
        else:
            x = np.asarray(features, dtype=float)
        if x.ndim != 2 or (x.shape[0] and x.shape[1] != self.cfg.input_dim):
            raise DomainError(
                f"expected [T, {self.cfg.input_dim}] features, got {x.shape}"
            )
        t = x.shape[0]
        h_dim = self.cfg.cells_per_layer
        caches = []
        inp = x
        for layer in self.layers:
            wx, wh, b = layer["wx"], layer["wh"], layer["b"]
            h = np.zeros(h_dim)
            c = np.zeros(h_dim)
            hs = np.zeros((t, h_dim))
            steps = []
            for ti in range(t):
                pre = wx @ inp[ti] + wh @ h + b
                i = _sigmoid(pre[:h_dim])
                f = _sigmoid(pre[h_dim : 2 * h_dim])
                g = np.tanh(pre[2 * h_dim : 3 * h_dim])
                o = _sigmoid(pre[3 * h_dim :])
                c_new = f * c + i * g
                tc = np.tanh(c_new)
                h_new = o * tc
                steps.append((inp[ti], h, c, i, f, g, o, c_new, tc))
                h, c = h_new, c_new
                hs[ti] = h
            caches.append({"steps": steps, "inp": inp})
            inp = hs
        logits = inp @ self.out_w.T + self.out_b
        if t:
            logits = logits - logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
        else:
            probs = np.zeros((0, self.cfg.num_classes))
        if not want_cache:
            return probs
        return probs, {"layers": caches, "top": inp, "probs": probs, "t": t}

    def backward(self, d_logits: np.ndarray, cache: dict):
        """Gradients for all parameters plus the input features.

        ``d_logits`` is the loss gradient w.r.t. the pre-softmax logits.
        """
        if cache is None:
            raise DomainError("backward requires the cache from forward(want_cache=True)")
        t = cache["t"]
        h_dim = self.cfg.cells_per_layer
        grads = {"out.w": d_logits.T @ cache["top"], "out.b": d_logits.sum(axis=0)}
        d_h_seq = d_logits @ self.out_w  # gradient flowing into top layer h outputs
        for li in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[li]
            lc = cache["layers"][li]
            wx, wh = layer["wx"], layer["wh"]
            g_wx = np.zeros_like(wx)
            g_wh = np.zeros_like(wh)
            g_b = np.zeros_like(layer["b"])
            d_inp = np.zeros_like(lc["inp"])
            dh_next = np.zeros(h_dim)
            dc_next = np.zeros(h_dim)
            for ti in range(t - 1, -1, -1):
                x_t, h_prev, c_prev, i, f, g, o, c_new, tc = lc["steps"][ti]
                dh = d_h_seq[ti] + dh_next
                do = dh * tc
                dc = dh * o * (1.0 - tc * tc) + dc_next
                di = dc * g
                df = dc * c_prev
                dg = dc * i
                dc_next = dc * f
                dpre = np.concatenate([
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ])
                g_wx += np.outer(dpre, x_t)
                g_wh += np.outer(dpre, h_prev)
                g_b += dpre
                d_inp[ti] = wx.T @ dpre
                dh_next = wh.T @ dpre
            grads[f"layer{li}.wx"] = g_wx
            grads[f"layer{li}.wh"] = g_wh
            grads[f"layer{li}.b"] = g_b
            d_h_seq = d_inp
        return grads, d_h_seq  # d_h_seq is now the input-feature gradient


def init_model(cfg: AcousticModelConfig, seed: int = 0) -> LstmModel:
    """Uniform(-0.05, 0.05) weights, forget-gate bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    h = cfg.cells_per_layer
    layers = []
    d_in = cfg.input_dim
    for _ in range(cfg.num_layers):
        b = np.zeros(4 * h)
        b[h : 2 * h] = FORGET_BIAS
        layers.append({
            "wx": rng.uniform(-INIT_RANGE, INIT_RANGE, size=(4 * h, d_in)),
            "wh": rng.uniform(-INIT_RANGE, INIT_RANGE, size=(4 * h, h)),
            "b": b,
        })
        d_in = h
    out_w = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(cfg.num_classes, h))
    out_b = np.zeros(cfg.num_classes)
    return LstmModel(cfg, layers, out_w, out_b)


def lstm_param_count(cfg: AcousticModelConfig) -> int:
    """Closed-form parameter count for the LSTM + softmax stack."""
    h, total, d_in = cfg.cells_per_layer, 0, cfg.input_dim
    for _ in range(cfg.num_layers):
        total += 4 * h * (d_in + h) + 4 * h
        d_in = h
    return total + cfg.num_classes * h + cfg.num_classes


def cross_entropy(probs: np.ndarray, labels: np.ndarray):
    """Mean CE loss and the logits gradient (softmax - onehot)/N."""
    n = probs.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(probs)
    picked = probs[np.arange(n), labels]
    loss = -float(np.mean(np.log(np.maximum(picked, 1e-300))))
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    return loss, d_logits / n


def clip_gradients(grads: dict, max_norm: float = GRAD_CLIP) -> dict:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}
    return grads


def _utterance_pass(model, frontend, stft_tensor, labels):
    """Forward + backward through front-end and LSTM for one utterance."""
    stacked, fe_cache = frontend.forward(stft_tensor, want_cache=True)
    labels = np.asarray(labels)[: stacked.data.shape[0]]
    probs, cache = model.forward(stacked, want_cache=True)
    loss, d_logits = cross_entropy(probs, labels)
    m_grads, d_feats = model.backward(d_logits, cache)
    fe_grads, _ = frontend.backward(d_feats, fe_cache)
    return loss, m_grads, fe_grads, probs, labels


def train_ce(model: LstmModel, frontend, dataset, cfg: TrainConfig, log_path=None, dev=None):
    """End-to-end cross-entropy training through the LSTM and front-end.

    ``dataset`` is a sequence of (complex_stft FeatureTensor, frame labels).
    Mutates ``model`` and ``frontend.params`` in place (front-end groups only
    when flagged trainable) and returns the per-epoch mean loss curve.
    When ``log_path`` is given, writes a CSV training log with columns
    (epoch, loss, dev_fer); dev FER is computed per epoch from ``dev``.
    """
    if not dataset:
        raise DomainError("empty training dataset")
    frontend.params.trainable = {
        g for g in GROUPS if cfg.trainable_groups.get(g, False)
    }
    lstm_trainable = cfg.trainable_groups.get("lstm", True)
    rng = np.random.default_rng(cfg.seed)
    curve = []
    log_rows = []
    fe_arrays = frontend.params.arrays()
    adam_m, adam_v, adam_t = {}, {}, 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = {}
            for ui in batch:
                x, labels = dataset[ui]
                loss, m_grads, fe_grads, _, _ = _utterance_pass(model, frontend, x, labels)
                if not np.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, utterance {ui}"
                    )
                losses.append(loss)
                for k, g in m_grads.items():
                    acc["m:" + k] = acc.get("m:" + k, 0.0) + g / len(batch)
                for k, g in fe_grads.items():
                    acc["f:" + k] = acc.get("f:" + k, 0.0) + g / len(batch)
            acc = clip_gradients(acc)
            params = dict(model.param_items())
            adam_t += 1
            for k, g in acc.items():
                if k.startswith("m:") and not lstm_trainable:
                    continue
                if k.startswith("f:") and not group_is_trainable(k[2:], frontend.params.trainable):
                    continue
                lr = cfg.learning_rate
                if k.startswith("f:"):
                    lr *= cfg.frontend_lr_scale
                if cfg.optimizer == "adam":
                    adam_m[k] = 0.9 * adam_m.get(k, 0.0) + 0.1 * g
                    adam_v[k] = 0.999 * adam_v.get(k, 0.0) + 0.001 * g * g
                    m_hat = adam_m[k] / (1.0 - 0.9**adam_t)
                    v_hat = adam_v[k] / (1.0 - 0.999**adam_t)
                    update = -lr * m_hat / (np.sqrt(v_hat) + 1e-8)
                else:
                    update = -lr * g
                if k.startswith("m:"):
                    params[k[2:]] += update
                else:
                    fe_arrays[k[2:]] += update
        curve.append(float(np.mean(losses)))
        if log_path is not None:
            dev_fer = frame_error_rate(model, frontend, dev) if dev else float("nan")
            log_rows.append((epoch, curve[-1], dev_fer))
    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write("epoch,loss,dev_fer\n")
            for epoch, loss, dev_fer in log_rows:
                fh.write(f"{epoch},{loss!r},{dev_fer!r}\n")
    return curve


def group_is_trainable(array_name: str, trainable: set) -> bool:
    from .frontend import group_of

    return group_of(array_name) in trainable


def frame_error_rate(model: LstmModel, frontend, dataset) -> float:
    """100 * misclassified frames / total frames under argmax decisions."""
    if not dataset:
        raise DomainError("empty dataset")
    wrong = total = 0
    for x, labels in dataset:
        stacked = frontend.forward(x)
        probs = model.forward(stacked)
        labels = np.asarray(labels)[: probs.shape[0]]
        pred = probs.argmax(axis=1) if probs.shape[0] else np.zeros(0, dtype=int)
        wrong += int(np.sum(pred != labels))
        total += len(labels)
    if total == 0:
        raise DomainError("dataset contains no frames")
    return 100.0 * wrong / total
