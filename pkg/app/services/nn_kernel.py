"""
Feed-forward Network Kernel
Training and inference for the classifier F_theta with hard or soft labels
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimensionMismatchError, InvalidParameterError, NonFiniteLossError
from app.models.kernel import Activation, LabelKind, OptimizerKind, TrainConfig
from app.utils.validation import is_valid_confidence_vector

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12

EpochCallback = Callable[[int, "Mlp"], None]


class Mlp:
    """
    Trained multi-layer perceptron with softmax output

    Parameters are copied and frozen on construction; an Mlp never changes
    after training, so concurrent predict calls are safe.
    """

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        activation: Activation,
        history: Sequence[float] = (),
    ):
        if len(weights) != len(biases) or not weights:
            raise InvalidParameterError("weights and biases must be non-empty and of equal length")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidParameterError(f"layer {i} has inconsistent shapes {w.shape} / {b.shape}")
            if i > 0 and weights[i - 1].shape[0] != w.shape[1]:
                raise InvalidParameterError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i - 1} emits {weights[i - 1].shape[0]}"
                )
        self.weights: Tuple[np.ndarray, ...] = tuple(_frozen(w) for w in weights)
        self.biases: Tuple[np.ndarray, ...] = tuple(_frozen(b) for b in biases)
        self.activation = Activation(activation)
        self.history: Tuple[float, ...] = tuple(float(v) for v in history)

    @property
    def n_inputs(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.weights[-1].shape[0])

    @property
    def layer_sizes(self) -> List[int]:
        return [self.n_inputs] + [int(w.shape[0]) for w in self.weights]

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list: W0, b0, W1, b1, ..."""
        params: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = _check_features(features, self.n_inputs)
        _, _, z_out = _forward(self.weights, self.biases, self.activation, features)
        return z_out

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """(n, k) confidence matrix"""
        return softmax(self.logits(features))


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def _check_features(features: np.ndarray, d: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    if features.ndim != 2 or features.shape[1] != d:
        got = features.shape[-1] if features.ndim >= 1 else 0
        raise DimensionMismatchError(expected=d, got=int(got))
    return features


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under a constant shift of the logits"""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.TANH:
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.TANH:
        return 1.0 - a * a
    return (z > 0.0).astype(np.float64)


def _forward(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activation: Activation,
    features: np.ndarray,
) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Returns (layer inputs, hidden pre-activations, output logits)"""
    inputs = [features]
    pre = []
    a = features
    for w, b in zip(weights[:-1], biases[:-1]):
        z = a @ w.T + b
        a = _activate(z, activation)
        pre.append(z)
        inputs.append(a)
    z_out = a @ weights[-1].T + biases[-1]
    return inputs, pre, z_out


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean of -sum(y * log p) with p clamped to [1e-12, 1]"""
    clipped = np.clip(probs, PROB_CLAMP, 1.0)
    return float(-(targets * np.log(clipped)).sum(axis=1).mean())


def loss_and_gradients(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activation: Activation,
    features: np.ndarray,
    targets: np.ndarray,
    weight_decay: float = 0.0,
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """
    Cross-entropy loss and its parameter gradients on one batch

    Args:
        weights: Layer weight matrices [out x in]
        biases: Layer bias vectors
        activation: Hidden activation
        features: (B, d) batch
        targets: (B, k) one-hot or soft label rows, each summing to 1

    Returns:
        (loss, weight gradients, bias gradients)
    """
    inputs, pre, z_out = _forward(weights, biases, activation, features)
    probs = softmax(z_out)
    loss = cross_entropy(probs, targets)

    batch = features.shape[0]
    delta = (probs - targets) / batch
    grad_w: List[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ inputs[layer]
        if weight_decay:
            grad_w[layer] = grad_w[layer] + weight_decay * weights[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer]) * _activation_grad(pre[layer - 1], inputs[layer], activation)
    return loss, grad_w, grad_b


class _Adam:
    def __init__(self, params: List[np.ndarray], cfg: TrainConfig):
        self.lr = cfg.learning_rate
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.eps = cfg.epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class _Sgd:
    def __init__(self, params: List[np.ndarray], cfg: TrainConfig):
        self.lr = cfg.learning_rate
        self.momentum = cfg.momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        for p, g, vel in zip(params, grads, self.velocity):
            if self.momentum:
                vel *= self.momentum
                vel += g
                p -= self.lr * vel
            else:
                p -= self.lr * g


def init_parameters(
    layer_sizes: Sequence[int],
    rng: np.random.Generator,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases"""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return weights, biases


def _prepare_targets(
    targets: np.ndarray,
    label_kind: LabelKind,
    n_rows: int,
    n_classes: Optional[int],
) -> np.ndarray:
    targets = np.asarray(targets)
    if label_kind == LabelKind.HARD_CLASS:
        labels = targets.astype(np.int64)
        if labels.shape != (n_rows,):
            raise DimensionMismatchError(expected=n_rows, got=int(labels.shape[0]), where="labels")
        k = n_classes if n_classes is not None else int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= k:
            raise InvalidParameterError(f"hard labels must lie in [0, {k})")
        return np.eye(k, dtype=np.float64)[labels]

    soft = np.asarray(targets, dtype=np.float64)
    if soft.ndim != 2 or soft.shape[0] != n_rows:
        raise DimensionMismatchError(expected=n_rows, got=int(soft.shape[0]), where="soft labels")
    if n_classes is not None and soft.shape[1] != n_classes:
        raise DimensionMismatchError(expected=n_classes, got=int(soft.shape[1]), where="soft label width")
    is_valid, error = is_valid_confidence_vector(soft)
    if not is_valid:
        raise InvalidParameterError(f"soft labels are not confidence vectors: {error}")
    return soft


def train(
    features: np.ndarray,
    targets: np.ndarray,
    label_kind: LabelKind,
    cfg: TrainConfig,
    n_classes: Optional[int] = None,
    epoch_callback: Optional[EpochCallback] = None,
) -> Mlp:
    """
    Train an Mlp with mini-batch cross-entropy

    Args:
        features: (n, d) training matrix
        targets: (n,) class indices for hard labels, (n, k) rows for soft labels
        label_kind: hard_class or soft_vector
        cfg: Training configuration; cfg.seed drives init and shuffling
        n_classes: Output width; inferred from the targets when omitted
        epoch_callback: Called as (epoch, snapshot) after every epoch

    Returns:
        Trained Mlp whose history holds the full-set loss after each epoch
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise InvalidParameterError(f"features must be a non-empty (n, d) matrix, got {features.shape}")
    n, d = features.shape
    label_kind = LabelKind(label_kind)
    y = _prepare_targets(targets, label_kind, n, n_classes)
    if cfg.batch_size > n:
        raise InvalidParameterError(f"batch_size {cfg.batch_size} exceeds training-set size {n}")

    rng = np.random.default_rng(cfg.seed)
    layer_sizes = [d] + list(cfg.hidden_sizes) + [y.shape[1]]
    weights, biases = init_parameters(layer_sizes, rng)
    params = [p for pair in zip(weights, biases) for p in pair]
    optimizer = _Adam(params, cfg) if cfg.optimizer == OptimizerKind.ADAM else _Sgd(params, cfg)

    history: List[float] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = order[start:start + cfg.batch_size]
            loss, grad_w, grad_b = loss_and_gradients(
                weights, biases, cfg.activation, features[idx], y[idx], cfg.weight_decay
            )
            if not np.isfinite(loss):
                raise NonFiniteLossError(epoch=epoch, batch=batch_no, loss=loss)
            grads = [g for pair in zip(grad_w, grad_b) for g in pair]
            optimizer.step(params, grads)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise NonFiniteLossError(epoch=epoch, batch=batch_no, loss=float("nan"))

        _, _, z_out = _forward(weights, biases, cfg.activation, features)
        history.append(cross_entropy(softmax(z_out), y))
        logger.debug(f"epoch {epoch}/{cfg.epochs} loss={history[-1]:.6f}")
        if epoch_callback is not None:
            epoch_callback(epoch, Mlp(weights, biases, cfg.activation, history))

    return Mlp(weights, biases, cfg.activation, history)


def predict(model: Mlp, x: np.ndarray) -> np.ndarray:
    """
    Confidence vector for one feature vector

    Args:
        model: Trained Mlp
        x: (d,) feature vector

    Returns:
        (k,) probability vector
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError(expected=1, got=x.ndim, where="predict expects one vector")
    return model.predict_proba(x)[0]


def predict_batch(model: Mlp, features: np.ndarray) -> np.ndarray:
    """(n, k) confidence matrix for a feature matrix"""
    return model.predict_proba(features)


def accuracy(model: Mlp, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the label (ties go to the lowest index)"""
    preds = predict_batch(model, features).argmax(axis=1)
    return float(np.mean(preds == np.asarray(labels)))
