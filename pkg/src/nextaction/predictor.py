"""Multi-task recurrent predictor for next activity and next KPI value.

A shared LSTM layer reads the one-hot activity prefix; its per-step
hidden sequence feeds two branch LSTMs, one ending in a softmax head
over the vocabulary and one in a linear head for the KPI value. Both
heads are trained jointly (cross-entropy plus weighted mean squared
error) with backpropagation through time and a Nadam-style optimiser.
Repeated application of the model rolls a prefix out to a complete
suffix.

Everything is plain float64 numpy. Weight tensors live in flat dicts
keyed by name so the optimiser, the checkpoint format, and the
finite-difference tests can iterate them uniformly. Gate order inside
each stacked LSTM tensor is forget, input, candidate, output.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ArtifactError,
    BoundsError,
    ConfigError,
    DataError,
    TerminationError,
    TrainingError,
)
from .eventlog import (
    END_SYMBOL,
    ActivityVocabulary,
    PrefixSample,
    encode_activities,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

# Parameter names: sh_* shared layer, a_* activity branch, k_* KPI branch.
LSTM_PREFIXES = ("sh", "a", "k")
HEAD_NAMES = ("a_head_w", "a_head_b", "k_head_w", "k_head_b")


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 100
    batch_size: int = 256
    epochs: int = 30
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    clip_norm: float = 5.0
    patience: int = 5
    kpi_loss_weight: float = 1.0
    validation_fraction: float = 0.1
    max_rollout: int | None = None

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.max_rollout is not None and self.max_rollout < 1:
            raise ConfigError("max_rollout must be at least 1")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class PredictedSuffix:
    """Roll-out result: (activity, kpi) steps, possibly cut at max length."""

    steps: tuple[tuple[str, float], ...]
    truncated: bool = False

    def __post_init__(self):
        names = [a for a, _ in self.steps]
        if END_SYMBOL in names[:-1]:
            raise DataError("termination symbol inside a suffix")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.steps)

    @property
    def kpi_values(self) -> tuple[float, ...]:
        return tuple(k for _, k in self.steps)

    @property
    def total_kpi(self) -> float:
        return float(sum(self.kpi_values))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    ez = np.exp(z[~positive])
    out[~positive] = ez / (1.0 + ez)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class LstmCellWeights:
    """Stacked per-gate tensors; gate g occupies columns [g*h, (g+1)*h)."""

    w_x: np.ndarray  # (features, 4*hidden)
    w_h: np.ndarray  # (hidden, 4*hidden)
    bias: np.ndarray  # (4*hidden,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    def gate(self, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        i = ("forget", "input", "candidate", "output").index(which)
        h = self.hidden_size
        sl = slice(i * h, (i + 1) * h)
        return self.w_x[:, sl], self.w_h[:, sl], self.bias[sl]


def lstm_cell_step(
    x: np.ndarray, h: np.ndarray, c: np.ndarray, w: LstmCellWeights
) -> tuple[np.ndarray, np.ndarray]:
    """One step of the standard gate equations; accepts batched inputs."""
    if not (np.isfinite(x).all() and np.isfinite(h).all() and np.isfinite(c).all()):
        raise DataError("non-finite input to the recurrent cell")
    hs = w.hidden_size
    z = x @ w.w_x + h @ w.w_h + w.bias
    f = _sigmoid(z[..., 0 * hs:1 * hs])
    i = _sigmoid(z[..., 1 * hs:2 * hs])
    g = np.tanh(z[..., 2 * hs:3 * hs])
    o = _sigmoid(z[..., 3 * hs:4 * hs])
    c_next = f * c + i * g
    h_next = o * np.tanh(c_next)
    return h_next, c_next


def _cell_weights(params: dict[str, np.ndarray], prefix: str) -> LstmCellWeights:
    return LstmCellWeights(params[f"{prefix}_wx"], params[f"{prefix}_wh"], params[f"{prefix}_b"])


def _layer_forward(x: np.ndarray, w: LstmCellWeights) -> tuple[np.ndarray, list[dict]]:
    """Run a full sequence, keeping per-step values for the backward pass."""
    batch, length, _ = x.shape
    hs = w.hidden_size
    h = np.zeros((batch, hs))
    c = np.zeros((batch, hs))
    hidden = np.empty((batch, length, hs))
    cache = []
    for t in range(length):
        xt = x[:, t, :]
        z = xt @ w.w_x + h @ w.w_h + w.bias
        f = _sigmoid(z[:, 0 * hs:1 * hs])
        i = _sigmoid(z[:, 1 * hs:2 * hs])
        g = np.tanh(z[:, 2 * hs:3 * hs])
        o = _sigmoid(z[:, 3 * hs:4 * hs])
        c_next = f * c + i * g
        tanh_c = np.tanh(c_next)
        h_next = o * tanh_c
        cache.append({"x": xt, "h_prev": h, "c_prev": c, "f": f, "i": i, "g": g,
                      "o": o, "tanh_c": tanh_c})
        h, c = h_next, c_next
        hidden[:, t, :] = h
    return hidden, cache


def _layer_backward(
    d_hidden: np.ndarray, cache: list[dict], w: LstmCellWeights
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """BPTT over one layer. d_hidden holds the per-step upstream gradient."""
    batch, length, hs = d_hidden.shape
    d_wx = np.zeros_like(w.w_x)
    d_wh = np.zeros_like(w.w_h)
    d_b = np.zeros_like(w.bias)
    d_x = np.empty((batch, length, w.w_x.shape[0]))
    dh_rec = np.zeros((batch, hs))
    dc_rec = np.zeros((batch, hs))
    for t in range(length - 1, -1, -1):
        step = cache[t]
        dh = d_hidden[:, t, :] + dh_rec
        do = dh * step["tanh_c"]
        dc = dc_rec + dh * step["o"] * (1.0 - step["tanh_c"] ** 2)
        df = dc * step["c_prev"]
        di = dc * step["g"]
        dg = dc * step["i"]
        dz = np.concatenate(
            [
                df * step["f"] * (1.0 - step["f"]),
                di * step["i"] * (1.0 - step["i"]),
                dg * (1.0 - step["g"] ** 2),
                do * step["o"] * (1.0 - step["o"]),
            ],
            axis=1,
        )
        d_wx += step["x"].T @ dz
        d_wh += step["h_prev"].T @ dz
        d_b += dz.sum(axis=0)
        d_x[:, t, :] = dz @ w.w_x.T
        dh_rec = dz @ w.w_h.T
        dc_rec = dc * step["f"]
    return {"wx": d_wx, "wh": d_wh, "b": d_b}, d_x


def init_params(
    features: int, hidden_size: int, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases with the forget gate opened."""

    def glorot(fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    params: dict[str, np.ndarray] = {}
    for prefix, in_size in (("sh", features), ("a", hidden_size), ("k", hidden_size)):
        params[f"{prefix}_wx"] = glorot(in_size, hidden_size, (in_size, 4 * hidden_size))
        params[f"{prefix}_wh"] = glorot(hidden_size, hidden_size, (hidden_size, 4 * hidden_size))
        bias = np.zeros(4 * hidden_size)
        bias[:hidden_size] = 1.0
        params[f"{prefix}_b"] = bias
    params["a_head_w"] = glorot(hidden_size, features, (hidden_size, features))
    params["a_head_b"] = np.zeros(features)
    params["k_head_w"] = glorot(hidden_size, 1, (hidden_size, 1))
    params["k_head_b"] = np.zeros(1)
    return params


def _forward_batch(
    params: dict[str, np.ndarray], x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Logits and normalized KPI estimates for a (batch, len, features) block."""
    shared_h, shared_cache = _layer_forward(x, _cell_weights(params, "sh"))
    act_h, act_cache = _layer_forward(shared_h, _cell_weights(params, "a"))
    kpi_h, kpi_cache = _layer_forward(shared_h, _cell_weights(params, "k"))
    logits = act_h[:, -1, :] @ params["a_head_w"] + params["a_head_b"]
    kpi = kpi_h[:, -1, :] @ params["k_head_w"][:, 0] + params["k_head_b"][0]
    state = {
        "x": x,
        "shared_cache": shared_cache,
        "act_cache": act_cache,
        "kpi_cache": kpi_cache,
        "act_last": act_h[:, -1, :],
        "kpi_last": kpi_h[:, -1, :],
        "length": x.shape[1],
    }
    return logits, kpi, state


def compute_gradients(
    params: dict[str, np.ndarray],
    x: np.ndarray,
    label_index: np.ndarray,
    label_kpi: np.ndarray,
    kpi_loss_weight: float = 1.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Joint loss and its gradient for one equal-length batch.

    Loss = mean cross-entropy of the activity head + weight * mean
    squared error of the (normalized) KPI head. Pure function of the
    parameters, which is what the finite-difference check relies on.
    """
    batch = x.shape[0]
    logits, kpi, state = _forward_batch(params, x)
    log_probs = _log_softmax(logits)
    ce = -float(log_probs[np.arange(batch), label_index].mean())
    err = kpi - label_kpi
    mse = float((err ** 2).mean())
    loss = ce + kpi_loss_weight * mse

    d_logits = np.exp(log_probs)
    d_logits[np.arange(batch), label_index] -= 1.0
    d_logits /= batch
    d_kpi = kpi_loss_weight * 2.0 * err / batch

    grads: dict[str, np.ndarray] = {
        "a_head_w": state["act_last"].T @ d_logits,
        "a_head_b": d_logits.sum(axis=0),
        "k_head_w": (state["kpi_last"].T @ d_kpi)[:, None],
        "k_head_b": np.array([d_kpi.sum()]),
    }
    hidden = params["sh_wh"].shape[0]
    d_act_h = np.zeros((batch, state["length"], hidden))
    d_act_h[:, -1, :] = d_logits @ params["a_head_w"].T
    d_kpi_h = np.zeros((batch, state["length"], hidden))
    d_kpi_h[:, -1, :] = np.outer(d_kpi, params["k_head_w"][:, 0])

    act_grads, d_shared_a = _layer_backward(d_act_h, state["act_cache"], _cell_weights(params, "a"))
    kpi_grads, d_shared_k = _layer_backward(d_kpi_h, state["kpi_cache"], _cell_weights(params, "k"))
    shared_grads, _ = _layer_backward(
        d_shared_a + d_shared_k, state["shared_cache"], _cell_weights(params, "sh")
    )
    for prefix, layer in (("sh", shared_grads), ("a", act_grads), ("k", kpi_grads)):
        grads[f"{prefix}_wx"] = layer["wx"]
        grads[f"{prefix}_wh"] = layer["wh"]
        grads[f"{prefix}_b"] = layer["b"]
    return loss, grads


def clip_by_global_norm(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    total = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if total <= clip or total == 0.0:
        return grads
    scale = clip / total
    return {name: g * scale for name, g in grads.items()}


class NadamState:
    """First/second moments per tensor plus the shared step counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(
        self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], config: TrainConfig
    ):
        self.t += 1
        b1, b2 = config.beta1, config.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            # Nesterov-style blend of the bias-corrected moment and the raw gradient.
            m_bar = b1 * (m / bias1) + (1.0 - b1) * (g / bias1)
            params[name] = params[name] - config.learning_rate * m_bar / (
                np.sqrt(v / bias2) + config.epsilon
            )


@dataclass
class MultiTaskModel:
    """Trained weights plus everything needed to use them."""

    params: dict[str, np.ndarray]
    vocabulary: ActivityVocabulary
    config: TrainConfig
    kpi_mean: float
    kpi_std: float
    max_rollout: int
    history: dict = field(default_factory=dict)

    @property
    def hidden_size(self) -> int:
        return self.params["sh_wh"].shape[0]

    def predict_suffix(self, prefix, max_len: int | None = None) -> PredictedSuffix:
        return predict_suffix(self, prefix, max_len)

    def save(self, path: str | Path):
        save_model(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "MultiTaskModel":
        return load_model(path)


def forward(model: MultiTaskModel, sample) -> tuple[np.ndarray, float]:
    """Next-activity distribution and de-normalized KPI estimate.

    Accepts a PrefixSample or a raw one-hot (length, features) matrix.
    The distribution is indexed by one-hot column, like the labels; the
    KPI estimate is mapped back to original units and clamped at 0.
    """
    matrix = sample.prefix if isinstance(sample, PrefixSample) else np.asarray(sample, float)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise DataError("prefix matrix must be 2-d with at least one row")
    logits, kpi, _ = _forward_batch(model.params, matrix[None, :, :])
    probs = np.exp(_log_softmax(logits[0]))
    value = max(0.0, float(kpi[0]) * model.kpi_std + model.kpi_mean)
    return probs, value


def _bucket_batches(
    order: np.ndarray, lengths: np.ndarray, batch_size: int
) -> list[np.ndarray]:
    """Group sample indices by prefix length, then chunk. No padding."""
    buckets: dict[int, list[int]] = {}
    for idx in order:
        buckets.setdefault(int(lengths[idx]), []).append(int(idx))
    batches = []
    for length in sorted(buckets):
        members = buckets[length]
        for lo in range(0, len(members), batch_size):
            batches.append(np.array(members[lo:lo + batch_size], dtype=np.int64))
    return batches


def _batch_loss(
    params: dict[str, np.ndarray],
    samples: list[PrefixSample],
    batches: list[np.ndarray],
    labels: np.ndarray,
    kpi_labels: np.ndarray,
    weight: float,
) -> float:
    total, count = 0.0, 0
    for batch in batches:
        x = np.stack([samples[i].prefix for i in batch])
        logits, kpi, _ = _forward_batch(params, x)
        log_probs = _log_softmax(logits)
        ce = -float(log_probs[np.arange(len(batch)), labels[batch]].sum())
        se = float(((kpi - kpi_labels[batch]) ** 2).sum())
        total += ce + weight * se
        count += len(batch)
    return total / count


def train(
    samples: Sequence[PrefixSample],
    vocabulary: ActivityVocabulary,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
) -> MultiTaskModel:
    """Fit the multi-task model; deterministic for fixed inputs and seed.

    A fraction of the training traces is held out per case id to watch
    the joint validation loss; training stops once it fails to improve
    for `patience` epochs and the best weights are restored.
    """
    samples = list(samples)
    if not samples:
        raise DataError("cannot train on an empty sample set")
    features = vocabulary.size
    for sample in samples:
        if sample.prefix.shape[1] != features:
            raise DataError("sample width does not match the vocabulary size")

    rng = np.random.default_rng(seed)
    params = init_params(features, config.hidden_size, rng)

    kpi_values = np.array([s.label_kpi for s in samples], dtype=np.float64)
    kpi_mean = float(kpi_values.mean())
    kpi_std = float(kpi_values.std())
    if kpi_std == 0.0:
        kpi_std = 1.0

    case_ids = sorted({s.case_id for s in samples})
    n_val_cases = int(len(case_ids) * config.validation_fraction)
    shuffled_cases = list(case_ids)
    rng.shuffle(shuffled_cases)
    val_cases = set(shuffled_cases[:n_val_cases])
    train_idx = np.array(
        [i for i, s in enumerate(samples) if s.case_id not in val_cases], dtype=np.int64
    )
    val_idx = np.array(
        [i for i, s in enumerate(samples) if s.case_id in val_cases], dtype=np.int64
    )
    if train_idx.size == 0:
        train_idx, val_idx = val_idx, train_idx

    labels = np.array([s.label_index for s in samples], dtype=np.int64)
    kpi_labels = (kpi_values - kpi_mean) / kpi_std
    lengths = np.array([s.length for s in samples], dtype=np.int64)

    optimiser = NadamState(params)
    history: dict[str, list | int] = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    best_loss = np.inf
    best_params: dict[str, np.ndarray] | None = None
    stale = 0

    val_batches = _bucket_batches(val_idx, lengths, config.batch_size) if val_idx.size else []

    for epoch in range(config.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        epoch_loss, seen = 0.0, 0
        for step, batch in enumerate(_bucket_batches(order, lengths, config.batch_size)):
            x = np.stack([samples[i].prefix for i in batch])
            loss, grads = compute_gradients(
                params, x, labels[batch], kpi_labels[batch], config.kpi_loss_weight
            )
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {step}")
            grads = clip_by_global_norm(grads, config.clip_norm)
            optimiser.update(params, grads, config)
            epoch_loss += loss * len(batch)
            seen += len(batch)
        history["train_loss"].append(epoch_loss / seen)

        if val_batches:
            val_loss = _batch_loss(
                params, samples, val_batches, labels, kpi_labels, config.kpi_loss_weight
            )
            history["val_loss"].append(val_loss)
            if val_loss < best_loss:
                best_loss = val_loss
                best_params = {k: v.copy() for k, v in params.items()}
                history["best_epoch"] = epoch
                stale = 0
            else:
                stale += 1
                if stale > config.patience:
                    logger.info("early stop at epoch %d (best %d)", epoch, history["best_epoch"])
                    break

    if best_params is not None:
        params = best_params

    max_rollout = config.max_rollout or int(lengths.max()) + 2
    return MultiTaskModel(
        params=params,
        vocabulary=vocabulary,
        config=config,
        kpi_mean=kpi_mean,
        kpi_std=kpi_std,
        max_rollout=max_rollout,
        history=history,
    )


def predict_suffix(model: MultiTaskModel, prefix, max_len: int | None = None) -> PredictedSuffix:
    """Greedy roll-out: append the argmax activity and its KPI estimate,
    feed the extension back, stop at the termination symbol or max_len.
    """
    activities = list(prefix.activities if hasattr(prefix, "activities") else prefix)
    if len(activities) < 2:
        raise BoundsError("suffix prediction needs a prefix of at least 2 events")
    if END_SYMBOL in activities:
        raise TerminationError("prefix is already terminated")
    if max_len is None:
        max_len = model.max_rollout

    vocab = model.vocabulary
    onehots = encode_activities(activities, vocab)
    hs = model.hidden_size
    state = {p: (np.zeros(hs), np.zeros(hs)) for p in LSTM_PREFIXES}

    def advance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h1, c1 = lstm_cell_step(x, *state["sh"], _cell_weights(model.params, "sh"))
        state["sh"] = (h1, c1)
        h2a, c2a = lstm_cell_step(h1, *state["a"], _cell_weights(model.params, "a"))
        state["a"] = (h2a, c2a)
        h2k, c2k = lstm_cell_step(h1, *state["k"], _cell_weights(model.params, "k"))
        state["k"] = (h2k, c2k)
        return h2a, h2k

    for row in onehots:
        h_act, h_kpi = advance(row)

    steps: list[tuple[str, float]] = []
    truncated = False
    while True:
        logits = h_act @ model.params["a_head_w"] + model.params["a_head_b"]
        kpi_norm = float(h_kpi @ model.params["k_head_w"][:, 0] + model.params["k_head_b"][0])
        kpi = max(0.0, kpi_norm * model.kpi_std + model.kpi_mean)
        # Head outputs are indexed by one-hot column, like the training labels.
        name = vocab.by_onehot_column(int(np.argmax(logits)))
        steps.append((name, kpi))
        if name == END_SYMBOL:
            break
        if len(steps) >= max_len:
            truncated = True
            break
        h_act, h_kpi = advance(encode_activities([name], vocab)[0])
    return PredictedSuffix(steps=tuple(steps), truncated=truncated)


def save_model(model: MultiTaskModel, path: str | Path):
    """One npz container: weights, stats, config, vocabulary, history."""
    np.savez_compressed(
        path,
        format_version=np.array(CHECKPOINT_FORMAT_VERSION),
        kpi_stats=np.array([model.kpi_mean, model.kpi_std]),
        max_rollout=np.array(model.max_rollout),
        config_json=np.array(model.config.to_json()),
        vocabulary_json=np.array(model.vocabulary.to_json()),
        history_json=np.array(json.dumps(model.history)),
        **{f"param_{k}": v for k, v in model.params.items()},
    )


def load_model(path: str | Path) -> MultiTaskModel:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"no model checkpoint at {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != CHECKPOINT_FORMAT_VERSION:
                raise ArtifactError(f"unsupported checkpoint format version {version}")
            params = {
                key[len("param_"):]: data[key] for key in data.files if key.startswith("param_")
            }
            mean, std = data["kpi_stats"]
            return MultiTaskModel(
                params=params,
                vocabulary=ActivityVocabulary.from_json(str(data["vocabulary_json"])),
                config=TrainConfig.from_json(str(data["config_json"])),
                kpi_mean=float(mean),
                kpi_std=float(std),
                max_rollout=int(data["max_rollout"]),
                history=json.loads(str(data["history_json"])),
            )
    except (KeyError, ValueError, OSError) as exc:
        raise ArtifactError(f"corrupt checkpoint at {path}: {exc}") from None
