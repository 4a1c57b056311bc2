"""Fully connected softmax classifier with hidden-activation extraction.

The network is a stack of rectified hidden layers feeding a softmax output,
trained by mini-batch gradient descent on cross-entropy.  Parameters live in
plain numpy arrays so analytic gradients can be audited against finite
differences.  Dropout is the inverted variant: hidden activations are masked
and scaled by 1/(1-p) during training, and inference needs no adjustment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset

ACTIVATIONS_MAGIC = "treeview-activations v1"


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str  # "relu" for hidden layers, "softmax" for the output layer

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("layer width must be >= 1")
        if self.activation not in ("relu", "softmax"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    dropout_rate: float = 0.0
    seed: int = 0
    momentum: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)  # mean batch loss per epoch
    accuracies: list[float] = field(default_factory=list)  # full train accuracy per epoch

    def to_json(self) -> dict:
        return {"losses": self.losses, "accuracies": self.accuracies}


@dataclass
class MlpModel:
    input_dim: int
    layer_specs: list[LayerSpec]
    weights: list[np.ndarray]  # weights[l] has shape (width_l, width_{l-1})
    biases: list[np.ndarray]

    @property
    def num_hidden(self) -> int:
        return len(self.layer_specs) - 1

    @property
    def num_classes(self) -> int:
        return self.layer_specs[-1].width

    def hidden_widths(self) -> list[int]:
        return [spec.width for spec in self.layer_specs[:-1]]


@dataclass
class ActivationMatrix:
    """Hidden-unit outputs, one row per neuron and one column per sample."""

    values: np.ndarray  # (N, T)
    neuron_ids: list[tuple[int, int]]  # (hidden layer index, unit index)
    sample_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n, t = self.values.shape
        if len(self.neuron_ids) != n:
            raise ValueError("neuron_ids length does not match rows")
        if len(self.sample_ids) != t:
            raise ValueError("sample_ids length does not match columns")

    @property
    def num_neurons(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]


def init_model(input_dim: int, layer_specs: list[LayerSpec], seed: int) -> MlpModel:
    """Scaled-uniform weight init (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if len(layer_specs) < 2:
        raise ValueError("need at least one hidden layer plus the softmax output")
    for spec in layer_specs[:-1]:
        if spec.activation != "relu":
            raise ValueError("hidden layers must use the rectifier activation")
    if layer_specs[-1].activation != "softmax":
        raise ValueError("final layer must be the softmax output")

    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    fan_in = input_dim
    for spec in layer_specs:
        bound = np.sqrt(6.0 / (fan_in + spec.width))
        weights.append(rng.uniform(-bound, bound, size=(spec.width, fan_in)))
        biases.append(np.zeros(spec.width))
        fan_in = spec.width
    return MlpModel(input_dim=input_dim, layer_specs=list(layer_specs), weights=weights, biases=biases)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward(model: MlpModel, x: np.ndarray, dropout_rate: float = 0.0, rng=None):
    """Forward pass returning per-layer tensors needed by backprop.

    Returns (inputs, raw_hidden, masks, probs) where inputs[l] is what layer l
    consumed, raw_hidden[l] the post-relu activations before dropout, and
    masks[l] the inverted-dropout mask (None when dropout is off).
    """
    inputs = [x]
    raw_hidden = []
    masks = []
    a = x
    for l, spec in enumerate(model.layer_specs):
        z = a @ model.weights[l].T + model.biases[l]
        if spec.activation == "relu":
            h = np.maximum(z, 0.0)
            raw_hidden.append(h)
            if dropout_rate > 0.0:
                mask = (rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            a = h
            inputs.append(a)
        else:
            probs = _softmax(z)
    return inputs, raw_hidden, masks, probs


def predict_proba(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Softmax class probabilities, dropout disabled; rows sum to 1."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != model.input_dim:
        raise ValueError(
            f"feature width {features.shape[1]} does not match input_dim {model.input_dim}"
        )
    _, _, _, probs = _forward(model, features)
    return probs


def predict(model: MlpModel, features: np.ndarray) -> np.ndarray:
    return predict_proba(model, features).argmax(axis=1)


def loss_and_gradients(model: MlpModel, x: np.ndarray, labels: np.ndarray,
                       dropout_rate: float = 0.0, rng=None):
    """Mean cross-entropy over the batch and gradients for every parameter."""
    batch = x.shape[0]
    inputs, raw_hidden, masks, probs = _forward(model, x, dropout_rate, rng)
    onehot = np.zeros_like(probs)
    onehot[np.arange(batch), labels] = 1.0
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(batch), labels], 1e-300))))

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    delta = (probs - onehot) / batch
    for l in range(len(model.layer_specs) - 1, -1, -1):
        grad_w[l] = delta.T @ inputs[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            upstream = delta @ model.weights[l]
            if masks[l - 1] is not None:
                upstream = upstream * masks[l - 1]
            delta = upstream * (raw_hidden[l - 1] > 0)
    return loss, grad_w, grad_b


def train(model: MlpModel, data: Dataset, cfg: TrainConfig) -> TrainReport:
    """Mini-batch gradient descent on cross-entropy; mutates the model in place."""
    t = data.num_samples
    if cfg.batch_size > t:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds {t} training samples")
    if data.features.shape[1] != model.input_dim:
        raise ValueError("dataset width does not match model input_dim")
    if data.labels.max(initial=0) >= model.num_classes:
        raise ValueError("labels exceed model output width")

    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    report = TrainReport()

    for epoch in range(cfg.epochs):
        perm = rng.permutation(t)
        batch_losses = []
        for batch_no, start in enumerate(range(0, t, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            loss, grad_w, grad_b = loss_and_gradients(
                model, data.features[idx], data.labels[idx], cfg.dropout_rate, rng
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, batch_no)
            for l in range(len(model.weights)):
                vel_w[l] = cfg.momentum * vel_w[l] - cfg.learning_rate * grad_w[l]
                vel_b[l] = cfg.momentum * vel_b[l] - cfg.learning_rate * grad_b[l]
                model.weights[l] += vel_w[l]
                model.biases[l] += vel_b[l]
            batch_losses.append(loss)
        accuracy = float(np.mean(predict(model, data.features) == data.labels))
        report.losses.append(float(np.mean(batch_losses)))
        report.accuracies.append(accuracy)
    return report


def _resolve_layers(model: MlpModel, layers) -> list[int]:
    if layers == "all" or layers is None:
        return list(range(model.num_hidden))
    selected = []
    for l in layers:
        l = int(l)
        if not 0 <= l < model.num_hidden:
            raise ValueError(
                f"layer selector {l} invalid: hidden layers are 0..{model.num_hidden - 1} "
                "(the output layer cannot be selected)"
            )
        selected.append(l)
    if not selected:
        raise ValueError("layer selector is empty")
    return selected


def extract_activations(model: MlpModel, data: Dataset, layers="all") -> ActivationMatrix:
    """Post-rectifier activations of the selected hidden layers, dropout disabled.

    Rows are neurons (concatenated in layer order), columns follow the sample
    order of ``data``.
    """
    selected = _resolve_layers(model, layers)
    if data.features.shape[1] != model.input_dim:
        raise ValueError("dataset width does not match model input_dim")
    _, raw_hidden, _, _ = _forward(model, data.features)
    blocks = []
    neuron_ids = []
    for l in selected:
        blocks.append(raw_hidden[l].T)
        neuron_ids.extend((l, u) for u in range(model.layer_specs[l].width))
    return ActivationMatrix(
        values=np.vstack(blocks),
        neuron_ids=neuron_ids,
        sample_ids=list(data.sample_ids),
    )


def export_activations(am: ActivationMatrix, path) -> None:
    """Write the exchange format: magic/dims header, id lines, then value rows."""
    for sid in am.sample_ids:
        if "," in sid or "\n" in sid:
            raise ValueError(f"sample id {sid!r} cannot contain commas or newlines")
    lines = [f"{ACTIVATIONS_MAGIC} N={am.num_neurons} T={am.num_samples}"]
    lines.append(",".join(f"{layer}:{unit}" for layer, unit in am.neuron_ids))
    lines.append(",".join(am.sample_ids))
    for row in am.values:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def import_activations(path) -> ActivationMatrix:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"activation file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(ACTIVATIONS_MAGIC):
        raise ValueError("not a treeview activation file (bad magic line)")
    try:
        fields = dict(item.split("=") for item in lines[0][len(ACTIVATIONS_MAGIC):].split())
        n, t = int(fields["N"]), int(fields["T"])
    except (ValueError, KeyError):
        raise ValueError("malformed activation header") from None
    if len(lines) < 3:
        raise ValueError("activation file truncated before id lines")

    neuron_ids = []
    for token in lines[1].split(","):
        layer, _, unit = token.partition(":")
        try:
            neuron_ids.append((int(layer), int(unit)))
        except ValueError:
            raise ValueError(f"malformed neuron id {token!r}") from None
    if len(neuron_ids) != n:
        raise ValueError(f"expected {n} neuron ids, found {len(neuron_ids)}")
    sample_ids = lines[2].split(",")
    if len(sample_ids) != t:
        raise ValueError(f"expected {t} sample ids, found {len(sample_ids)}")

    body = lines[3:]
    if len(body) != n:
        raise ValueError(f"expected {n} value rows, found {len(body)}")
    values = np.empty((n, t))
    for i, line in enumerate(body):
        cells = line.split(",")
        if len(cells) != t:
            raise ValueError(f"value row {i}: expected {t} columns, found {len(cells)}")
        values[i] = [float(c) for c in cells]
    return ActivationMatrix(values=values, neuron_ids=neuron_ids, sample_ids=sample_ids)


def model_to_json(model: MlpModel) -> dict:
    return {
        "input_dim": model.input_dim,
        "layers": [{"width": s.width, "activation": s.activation} for s in model.layer_specs],
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_json(obj: dict) -> MlpModel:
    specs = [LayerSpec(width=l["width"], activation=l["activation"]) for l in obj["layers"]]
    weights = [np.array(w, dtype=float) for w in obj["weights"]]
    biases = [np.array(b, dtype=float) for b in obj["biases"]]
    model = MlpModel(input_dim=int(obj["input_dim"]), layer_specs=specs,
                     weights=weights, biases=biases)
    fan_in = model.input_dim
    for spec, w, b in zip(specs, weights, biases):
        if w.shape != (spec.width, fan_in) or b.shape != (spec.width,):
            raise ValueError("model parameter shapes do not match layer specs")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters contain non-finite values")
        fan_in = spec.width
    return model
