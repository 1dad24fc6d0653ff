"""
Attention-based sensor ranking.

Each sensor is a feature row [queue length, battery, channel gain]. The rows
are min-max normalized, projected to queries/keys/values, mixed with a
softmax over plain (unscaled) dot products, reduced to one importance score
per sensor by a linear head, and the top-k sensors are kept for the prompt.

The head can be trained with a hindsight surrogate: softmax over scores,
cross-entropy against the sensor that lost the most packets that step.
"""

import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FEATURE_NAMES = ("queue_len", "battery_j", "gain_db")
CHECKPOINT_HEADER = "attention-params v1"


class AttentionError(Exception):
    """Base class for attention pipeline errors."""


class ShapeError(AttentionError):
    pass


class NonFiniteError(AttentionError):
    pass


class TopKError(AttentionError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """N sensors x 3 features, optionally carrying the min-max transform used."""
    values: np.ndarray
    sensor_ids: Tuple[int, ...]
    col_min: Optional[np.ndarray] = None
    col_max: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ShapeError(f"Feature matrix must be N x d with N >= 1, got shape {values.shape}")
        if len(self.sensor_ids) != values.shape[0]:
            raise ShapeError("One sensor id per feature row required")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("Feature matrix contains non-finite entries")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sensor_ids", tuple(int(i) for i in self.sensor_ids))

    @property
    def normalized(self):
        return self.col_min is not None

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_s: np.ndarray
    b_s: float

    def __post_init__(self):
        mats = [np.asarray(m, dtype=float) for m in (self.w_q, self.w_k, self.w_v)]
        w_s = np.asarray(self.w_s, dtype=float).reshape(-1)
        shape = mats[0].shape
        if len(shape) != 2:
            raise ShapeError("Projection matrices must be 2-D")
        if any(m.shape != shape for m in mats):
            raise ShapeError("W_Q, W_K and W_V must share one shape")
        if w_s.shape != (shape[1],):
            raise ShapeError(f"w_s must have length d' = {shape[1]}, got {w_s.shape}")
        arrays = mats + [w_s, np.array([self.b_s], dtype=float)]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise NonFiniteError("Attention parameters must be finite")
        object.__setattr__(self, "w_q", mats[0])
        object.__setattr__(self, "w_k", mats[1])
        object.__setattr__(self, "w_v", mats[2])
        object.__setattr__(self, "w_s", w_s)
        object.__setattr__(self, "b_s", float(self.b_s))

    @property
    def d(self):
        return self.w_q.shape[0]

    @property
    def d_prime(self):
        return self.w_q.shape[1]

    def as_arrays(self):
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "w_s": self.w_s, "b_s": np.array([self.b_s])}

    def equals(self, other):
        return all(np.array_equal(a, b) for a, b in zip(self.as_arrays().values(), other.as_arrays().values()))


@dataclass(frozen=True)
class ImportanceRanking:
    scores: np.ndarray
    alpha: np.ndarray
    selected: Tuple[int, ...]
    sensor_ids: Tuple[int, ...] = ()


@dataclass(frozen=True)
class FeedbackStep:
    """One step of training signal: normalized features, chosen ids and realized per-sensor loss."""
    features: np.ndarray
    sensor_ids: Tuple[int, ...]
    selected: Tuple[int, ...]
    per_sensor_loss: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UpdateOutcome:
    params: AttentionParams
    aborted: bool
    loss: float


def init_params(rng, d_prime=8, scale=0.5, d=len(FEATURE_NAMES)):
    """Uniform [-scale, scale] initialization from the `init` stream."""
    if d_prime < 1:
        raise ShapeError("d' must be >= 1")
    return AttentionParams(
        w_q=rng.uniform(-scale, scale, size=(d, d_prime)),
        w_k=rng.uniform(-scale, scale, size=(d, d_prime)),
        w_v=rng.uniform(-scale, scale, size=(d, d_prime)),
        w_s=rng.uniform(-scale, scale, size=d_prime),
        b_s=float(rng.uniform(-scale, scale)),
    )


def _matrix(x):
    return x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=float)


def normalize_features(raw):
    """
    Min-max scale each column to [0, 1]

    Constant columns map to 0.5. The returned matrix keeps the per-column
    min/max so `denormalize` can invert it.
    """
    values = raw.values
    col_min = values.min(axis=0)
    col_max = values.max(axis=0)
    span = col_max - col_min
    constant = span == 0
    safe_span = np.where(constant, 1.0, span)
    scaled = np.where(constant, 0.5, (values - col_min) / safe_span)
    return FeatureMatrix(values=scaled, sensor_ids=raw.sensor_ids, col_min=col_min, col_max=col_max)


def denormalize(normalized):
    if not normalized.normalized:
        raise AttentionError("Feature matrix carries no normalization metadata")
    span = normalized.col_max - normalized.col_min
    constant = span == 0
    values = np.where(constant, normalized.col_min, normalized.values * span + normalized.col_min)
    return FeatureMatrix(values=values, sensor_ids=normalized.sensor_ids)


def qkv_project(x, params):
    """Q = X·W_Q, K = X·W_K, V = X·W_V."""
    X = _matrix(x)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ShapeError(f"Features have {X.shape[-1]} columns, projections expect {params.d}")
    return X @ params.w_q, X @ params.w_k, X @ params.w_v


def attention_weights(Q, K):
    """Row-wise softmax of Q·Kᵀ (no 1/sqrt(d') scaling)."""
    Q = np.asarray(Q, dtype=float)
    K = np.asarray(K, dtype=float)
    if Q.shape[1] != K.shape[1]:
        raise ShapeError("Queries and keys must share d'")
    logits = Q @ K.T
    logits = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def context_vectors(alpha, V):
    alpha = np.asarray(alpha, dtype=float)
    V = np.asarray(V, dtype=float)
    if alpha.shape[1] != V.shape[0]:
        raise ShapeError("Attention weights and values disagree on N")
    return alpha @ V


def importance_scores(Z, params):
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] != params.d_prime:
        raise ShapeError("Context vectors and w_s disagree on d'")
    return Z @ params.w_s + params.b_s


def top_k_select(scores, k, sensor_ids=None):
    """
    Ids of the k highest scores

    Args:
        scores: N-vector
        k: 1 <= k <= N
        sensor_ids: Ids aligned with scores (default 0..N-1)

    Returns:
        Tuple of ids, descending score, ties to the lower id
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    n = scores.shape[0]
    ids = np.arange(n) if sensor_ids is None else np.asarray(sensor_ids)
    if ids.shape[0] != n:
        raise ShapeError("One id per score required")
    if not 1 <= k <= n:
        raise TopKError(f"k={k} outside [1, {n}]")
    order = np.lexsort((ids, -scores))
    return tuple(int(ids[i]) for i in order[:k])


def rank_sensors(raw, params, k):
    """
    Full ranking pipeline on raw features

    Args:
        raw: FeatureMatrix (un-normalized)
        params: AttentionParams
        k: Number of sensors to keep (clipped to N)

    Returns:
        ImportanceRanking with scores, attention weights and selected ids
    """
    x = normalize_features(raw)
    Q, K, V = qkv_project(x, params)
    alpha = attention_weights(Q, K)
    scores = importance_scores(context_vectors(alpha, V), params)
    selected = top_k_select(scores, min(k, len(x)), x.sensor_ids)
    return ImportanceRanking(scores=scores, alpha=alpha, selected=selected, sensor_ids=x.sensor_ids)


def hindsight_label(step):
    """Row index of the sensor that lost most packets; queue length breaks an all-zero tie."""
    losses = np.array([step.per_sensor_loss.get(i, 0) for i in step.sensor_ids], dtype=float)
    if losses.max() > 0:
        return int(np.argmax(losses))
    return int(np.argmax(np.asarray(step.features)[:, 0]))


def _step_loss_and_grads(params, X, label):
    Q, K, V = X @ params.w_q, X @ params.w_k, X @ params.w_v
    A = attention_weights(Q, K)
    Z = A @ V
    s = Z @ params.w_s + params.b_s

    shifted = s - s.max()
    p = np.exp(shifted) / np.exp(shifted).sum()
    loss = float(-np.log(p[label]))

    g_s = p.copy()
    g_s[label] -= 1.0
    d_ws = Z.T @ g_s
    d_bs = float(g_s.sum())
    g_z = np.outer(g_s, params.w_s)
    g_a = g_z @ V.T
    g_v = A.T @ g_z
    g_logits = A * (g_a - (g_a * A).sum(axis=1, keepdims=True))
    g_q = g_logits @ K
    g_k = g_logits.T @ Q

    grads = {"w_q": X.T @ g_q, "w_k": X.T @ g_k, "w_v": X.T @ g_v, "w_s": d_ws, "b_s": d_bs}
    return loss, grads


def surrogate_gradients(params, feedback):
    """
    Mean hindsight cross-entropy over the feedback steps and its gradient

    Returns:
        (loss, {"w_q", "w_k", "w_v", "w_s", "b_s"} gradients)
    """
    if not feedback:
        raise AttentionError("update needs at least one feedback step")
    total = 0.0
    acc = {"w_q": 0.0, "w_k": 0.0, "w_v": 0.0, "w_s": 0.0, "b_s": 0.0}
    for step in feedback:
        X = np.asarray(step.features, dtype=float)
        loss, grads = _step_loss_and_grads(params, X, hindsight_label(step))
        total += loss
        for name, grad in grads.items():
            acc[name] = acc[name] + grad
    n = len(feedback)
    return total / n, {name: grad / n for name, grad in acc.items()}


def surrogate_loss(params, feedback):
    return surrogate_gradients(params, feedback)[0]


def update_params(params, feedback, learning_rate):
    """
    One gradient step on the hindsight surrogate

    Args:
        params: AttentionParams
        feedback: Non-empty list of FeedbackStep
        learning_rate: Step size (0 returns params unchanged)

    Returns:
        UpdateOutcome; aborted=True and params unchanged on non-finite gradients
    """
    with np.errstate(all="ignore"):
        loss, grads = surrogate_gradients(params, feedback)
    finite = np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values())
    if not finite:
        logger.warning("⚠️ Attention update aborted: non-finite gradient")
        return UpdateOutcome(params=params, aborted=True, loss=float(loss))
    if learning_rate == 0:
        return UpdateOutcome(params=params, aborted=False, loss=loss)

    updated = AttentionParams(
        w_q=params.w_q - learning_rate * grads["w_q"],
        w_k=params.w_k - learning_rate * grads["w_k"],
        w_v=params.w_v - learning_rate * grads["w_v"],
        w_s=params.w_s - learning_rate * grads["w_s"],
        b_s=params.b_s - learning_rate * grads["b_s"],
    )
    return UpdateOutcome(params=updated, aborted=False, loss=loss)


def params_to_text(params):
    """Flat checkpoint text: one shape header line then row-major floats per parameter."""
    lines = [CHECKPOINT_HEADER]
    for name, array in params.as_arrays().items():
        array = np.asarray(array, dtype=float)
        shape = array.shape if name != "b_s" else ()
        lines.append(" ".join([name] + [str(n) for n in shape]))
        lines.append(" ".join(repr(float(v)) for v in array.reshape(-1)))
    return "\n".join(lines) + "\n"


def params_from_text(text):
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise AttentionError("Not an attention checkpoint")
    arrays = {}
    body = lines[1:]
    if len(body) % 2:
        raise AttentionError("Truncated attention checkpoint")
    try:
        for header, data in zip(body[0::2], body[1::2]):
            parts = header.split()
            name, shape = parts[0], tuple(int(n) for n in parts[1:])
            values = np.array([float(v) for v in data.split()], dtype=float)
            arrays[name] = values.reshape(shape) if shape else float(values[0])
        return AttentionParams(
            w_q=arrays["w_q"], w_k=arrays["w_k"], w_v=arrays["w_v"], w_s=arrays["w_s"], b_s=arrays["b_s"]
        )
    except (KeyError, ValueError, IndexError) as e:
        raise AttentionError(f"Malformed attention checkpoint: {e}") from e


class AttentionRanker:
    """
    Trainable sensor ranker with checkpoint persistence

    Holds the current AttentionParams and swaps them for the updated value on
    every successful training step.
    """

    def __init__(self, params, model_file=None):
        self.params = params
        self.model_file = model_file
        self.history = []

    @classmethod
    def from_settings(cls, rng, d_prime=8, init_scale=0.5, model_file=None):
        """Restore from `model_file` when one is named, otherwise start from a fresh draw."""
        if model_file:
            ranker = cls(load_params(model_file), model_file)
            logger.info("✅ Attention parameters loaded: %s", model_file)
            return ranker
        return cls(init_params(rng, d_prime=d_prime, scale=init_scale), model_file)

    def rank(self, raw, k):
        return rank_sensors(raw, self.params, k)

    def train_step(self, feedback, learning_rate):
        outcome = update_params(self.params, feedback, learning_rate)
        if not outcome.aborted:
            self.params = outcome.params
        self.history.append(outcome.loss)
        return outcome

    def save_model(self, model_file=None):
        path = model_file or self.model_file
        if not path:
            raise AttentionError("No checkpoint path given")
        save_params(self.params, path)
        logger.info("✅ Attention parameters saved: %s", path)
        return path


def save_params(params, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".attention-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(params_to_text(params))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def load_params(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Attention checkpoint not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return params_from_text(f.read())
