"""Generator/discriminator pair, adversarial training loop and anomaly scoring."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, StateError
from .nn import (
    BCE_EPS,
    AdamState,
    DenseLayer,
    DropoutSpec,
    Network,
    SgdState,
    adam_step,
    bce_grad,
    bce_loss,
    make_rng,
    sgd_step,
)

GENERATOR_LAYERS = 5
DISCRIMINATOR_LAYERS = 6
MODEL_FORMAT = "fuelgan-model/1"


@dataclass
class GanConfig:
    latent_dim: int = 32
    feature_dim: int = 8
    generator_widths: Optional[list[int]] = None  # default [64, 128, 128, 64, feature_dim]
    discriminator_widths: list[int] = field(default_factory=lambda: [128, 64, 64, 32, 16, 1])
    dropout_rate: float = 0.3
    leaky_slope: float = 0.2
    k: int = 1
    batch_size: int = 64
    iterations: int = 2000
    adam_lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_lr: float = 0.1
    generator_loss: str = "minimax"
    seed: int = 0

    def __post_init__(self):
        if self.generator_widths is None:
            self.generator_widths = [64, 128, 128, 64, self.feature_dim]
        self.generator_widths = [int(w) for w in self.generator_widths]
        self.discriminator_widths = [int(w) for w in self.discriminator_widths]
        self.validate()

    def validate(self):
        if len(self.generator_widths) != GENERATOR_LAYERS:
            raise ConfigError(f"generator needs exactly {GENERATOR_LAYERS} dense layers, "
                              f"got widths {self.generator_widths}")
        if len(self.discriminator_widths) != DISCRIMINATOR_LAYERS:
            raise ConfigError(f"discriminator needs exactly {DISCRIMINATOR_LAYERS} dense layers, "
                              f"got widths {self.discriminator_widths}")
        if self.generator_widths[-1] != self.feature_dim:
            raise ConfigError(f"generator output width {self.generator_widths[-1]} "
                              f"!= feature_dim {self.feature_dim}")
        if self.discriminator_widths[-1] != 1:
            raise ConfigError("discriminator must end in a single unit")
        if min(self.generator_widths + self.discriminator_widths) < 1:
            raise ConfigError("layer widths must be positive")
        if self.latent_dim < 1 or self.feature_dim < 1:
            raise ConfigError("latent_dim and feature_dim must be >= 1")
        if self.k < 1 or self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("need k >= 1, batch_size >= 1, iterations >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.generator_loss not in ("minimax", "non-saturating"):
            raise ConfigError(f"generator_loss must be 'minimax' or 'non-saturating', "
                              f"got {self.generator_loss!r}")
        if self.adam_lr < 0 or self.sgd_lr < 0:
            raise ConfigError("learning rates must be non-negative")

    def with_feature_dim(self, n: int) -> "GanConfig":
        """Copy with the generator head resized to ``n`` features."""
        d = asdict(self)
        d["feature_dim"] = n
        d["generator_widths"] = list(self.generator_widths[:-1]) + [n]
        return GanConfig(**d)


@dataclass
class GanModel:
    generator: Network
    discriminator: Network
    config: GanConfig
    generator_opt: AdamState
    discriminator_opt: SgdState
    scaler: Optional[dict] = None  # {"feature_names", "min", "max"} when trained on scaled data

    def discriminate(self, rows: np.ndarray) -> np.ndarray:
        """D(x) for each row, dropout off."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.config.feature_dim:
            raise DimensionError(f"rows of shape {rows.shape} do not match feature_dim "
                                 f"{self.config.feature_dim}")
        return self.discriminator(rows)[:, 0]

    def generate(self, z: np.ndarray) -> np.ndarray:
        return self.generator(z)


def build(config: GanConfig, rng: np.random.Generator | None = None) -> GanModel:
    """Fresh model: tanh generator, leaky-relu + dropout discriminator with a sigmoid head."""
    config.validate()
    rng = make_rng(config.seed) if rng is None else rng
    g_layers = []
    fan_in = config.latent_dim
    for w in config.generator_widths:
        g_layers.append(DenseLayer.init(fan_in, w, "tanh", rng))
        fan_in = w
    d_layers = []
    fan_in = config.feature_dim
    for i, w in enumerate(config.discriminator_widths):
        if i < DISCRIMINATOR_LAYERS - 1:
            d_layers.append(DenseLayer.init(fan_in, w, "leaky_relu", rng, config.leaky_slope))
            d_layers.append(DropoutSpec(config.dropout_rate))
        else:
            d_layers.append(DenseLayer.init(fan_in, w, "sigmoid", rng))
        fan_in = w
    return GanModel(
        generator=Network(g_layers),
        discriminator=Network(d_layers),
        config=config,
        generator_opt=AdamState(config.adam_lr, config.adam_beta1, config.adam_beta2, config.adam_eps),
        discriminator_opt=SgdState(config.sgd_lr),
    )


def sample_latent(m: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if m < 1 or d < 1:
        raise ValueError(f"sample_latent needs m, d >= 1, got {m}, {d}")
    return rng.standard_normal((m, d))


def value_function(model: GanModel, real_batch: np.ndarray, noise_batch: np.ndarray) -> float:
    """Batch estimate of mean log D(x) + mean log(1 - D(G(z))), dropout off."""
    real_batch = np.asarray(real_batch, dtype=np.float64)
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    if real_batch.size == 0 or noise_batch.size == 0:
        raise ValueError("value_function needs non-empty batches")
    d_real = np.clip(model.discriminate(real_batch), BCE_EPS, 1 - BCE_EPS)
    d_fake = np.clip(model.discriminate(model.generate(noise_batch)), BCE_EPS, 1 - BCE_EPS)
    return float(np.mean(np.log(d_real)) + np.mean(np.log(1.0 - d_fake)))


def discriminator_gradients(model: GanModel, real_batch: np.ndarray, z: np.ndarray,
                            rng: np.random.Generator | None, training: bool = True):
    """Loss and gradients of BCE(D(x), 1) + BCE(D(G(z)), 0) w.r.t. discriminator parameters.

    The loss is the negated batch objective the discriminator ascends, so
    descending it follows the same gradient.
    """
    fake = model.generate(z)
    d = model.discriminator
    out_r, cache_r = d.forward(real_batch, training=training, rng=rng)
    out_f, cache_f = d.forward(fake, training=training, rng=rng)
    ones, zeros = np.ones_like(out_r), np.zeros_like(out_f)
    loss = bce_loss(out_r, ones) + bce_loss(out_f, zeros)
    g_r, _ = d.backward(cache_r, bce_grad(out_r, ones))
    g_f, _ = d.backward(cache_f, bce_grad(out_f, zeros))
    return loss, [a + b for a, b in zip(g_r, g_f)]


def discriminator_step(model: GanModel, real_batch: np.ndarray, rng: np.random.Generator) -> float:
    real_batch = np.asarray(real_batch, dtype=np.float64)
    if real_batch.ndim != 2 or real_batch.shape[1] != model.config.feature_dim:
        raise DimensionError(f"real batch of shape {real_batch.shape} does not match feature_dim "
                             f"{model.config.feature_dim}")
    z = sample_latent(real_batch.shape[0], model.config.latent_dim, rng)
    loss, grads = discriminator_gradients(model, real_batch, z, rng)
    sgd_step(model.discriminator.parameters(), grads, model.discriminator_opt, "descend")
    return loss


def generator_gradients(model: GanModel, z: np.ndarray):
    """Generator objective and its gradient, with the discriminator in inference mode."""
    fake, cache_g = model.generator.forward(z)
    out, cache_d = model.discriminator.forward(fake, training=False)
    if model.config.generator_loss == "minimax":
        zeros = np.zeros_like(out)
        loss = -bce_loss(out, zeros)  # mean log(1 - D(G(z)))
        upstream = -bce_grad(out, zeros)
    else:
        ones = np.ones_like(out)
        loss = bce_loss(out, ones)  # mean -log D(G(z))
        upstream = bce_grad(out, ones)
    _, grad_fake = model.discriminator.backward(cache_d, upstream)
    grads, _ = model.generator.backward(cache_g, grad_fake)
    return loss, grads


def generator_step(model: GanModel, rng: np.random.Generator, m: int | None = None) -> float:
    if not isinstance(model, GanModel):
        raise StateError("generator_step needs a built GanModel")
    z = sample_latent(m or model.config.batch_size, model.config.latent_dim, rng)
    loss, grads = generator_gradients(model, z)
    adam_step(model.generator.parameters(), grads, model.generator_opt)
    return loss


@dataclass
class TrainingTrace:
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    mean_d_real: list[float] = field(default_factory=list)
    mean_d_fake: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.d_loss)

    def rows(self):
        for i in range(len(self)):
            yield (i, self.d_loss[i], self.g_loss[i], self.value[i],
                   self.mean_d_real[i], self.mean_d_fake[i])

    def to_csv(self, path, fingerprint: str = "") -> None:
        lines = ["iteration,d_loss,g_loss,value,mean_d_real,mean_d_fake"]
        for row in self.rows():
            lines.append(",".join([str(row[0])] + [repr(float(v)) for v in row[1:]]))
        text = "\n".join(lines) + "\n"
        if fingerprint:
            text = f"# fingerprint={fingerprint}\n" + text
        Path(path).write_text(text)


def _check_training_data(data: np.ndarray, config: GanConfig) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != config.feature_dim:
        raise DimensionError(f"training data of shape {data.shape} does not match feature_dim "
                             f"{config.feature_dim}")
    if data.shape[0] < config.batch_size:
        raise DomainError(f"{data.shape[0]} rows is fewer than one batch of {config.batch_size}")
    if not np.all(np.isfinite(data)) or np.max(np.abs(data)) > 1.0 + 1e-9:
        raise DomainError("training data must be scaled to [-1, 1]")
    return data


def train(config: GanConfig, data: np.ndarray,
          hook: Callable[[str, int], None] | None = None) -> tuple[GanModel, TrainingTrace]:
    """Adversarial training: per iteration, ``k`` discriminator steps then one generator step.

    ``hook(kind, iteration)`` is called after each update with kind
    ``"discriminator"`` or ``"generator"``.
    """
    data = _check_training_data(data, config)
    rng = make_rng(config.seed)
    model = build(config, rng)
    trace = TrainingTrace()
    m = config.batch_size
    n_rows = data.shape[0]
    for it in range(config.iterations):
        d_losses = []
        for _ in range(config.k):
            real = data[rng.integers(0, n_rows, size=m)]
            d_losses.append(discriminator_step(model, real, rng))
            if hook:
                hook("discriminator", it)
        z = sample_latent(m, config.latent_dim, rng)
        g_loss, grads = generator_gradients(model, z)
        adam_step(model.generator.parameters(), grads, model.generator_opt)
        if hook:
            hook("generator", it)
        d_real = np.clip(model.discriminate(real), BCE_EPS, 1 - BCE_EPS)
        d_fake = np.clip(model.discriminate(model.generate(z)), BCE_EPS, 1 - BCE_EPS)
        trace.d_loss.append(float(np.mean(d_losses)))
        trace.g_loss.append(float(g_loss))
        trace.value.append(float(np.mean(np.log(d_real)) + np.mean(np.log(1.0 - d_fake))))
        trace.mean_d_real.append(float(d_real.mean()))
        trace.mean_d_fake.append(float(d_fake.mean()))
    return model, trace


@dataclass(frozen=True)
class AnomalyScore:
    probability_real: float
    anomaly_score: float
    predicted_label: int  # 1 = anomalous
    threshold: float


def anomaly_scores(model: GanModel, rows: np.ndarray) -> np.ndarray:
    return 1.0 - model.discriminate(rows)


def score(model: GanModel, rows: np.ndarray, threshold: float = 0.5) -> list[AnomalyScore]:
    """Per-row D(x); a row is anomalous iff ``1 - D(x) > threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    p = model.discriminate(rows)
    return [AnomalyScore(float(pi), float(1.0 - pi), int((1.0 - pi) > threshold), threshold) for pi in p]


def calibrate_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold on anomaly score that maximizes F1 against ``labels``.

    Candidates are midpoints between consecutive distinct scores plus 0 and 1.
    Ties go to higher accuracy, then to the lower threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("calibrate_threshold needs equal-length non-empty inputs")
    u = np.unique(scores)
    candidates = np.unique(np.concatenate([[0.0, 1.0], (u[:-1] + u[1:]) / 2.0]))
    order = np.argsort(scores)
    s_sorted = scores[order]
    pos_sorted = labels[order]
    total_pos = pos_sorted.sum()
    # rows with score <= t are predicted normal
    below = np.searchsorted(s_sorted, candidates, side="right")
    cum_pos = np.concatenate([[0], np.cumsum(pos_sorted)])
    fn = cum_pos[below]
    tn = below - fn
    tp = total_pos - fn
    fp = (scores.size - below) - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    acc = (tp + tn) / scores.size
    best = np.lexsort((candidates, -acc, -f1))[0]
    return float(candidates[best])


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, DenseLayer):
        return {
            "type": "dense",
            "in": layer.in_dim,
            "out": layer.out_dim,
            "activation": layer.activation,
            "negative_slope": layer.negative_slope,
            "weights": layer.weights.ravel().tolist(),
            "biases": layer.biases.tolist(),
        }
    return {"type": "dropout", "rate": layer.rate}


def _layer_from_dict(d: dict):
    if d["type"] == "dropout":
        return DropoutSpec(d["rate"])
    w = np.array(d["weights"], dtype=np.float64).reshape(d["out"], d["in"])
    return DenseLayer(w, np.array(d["biases"], dtype=np.float64), d["activation"], d["negative_slope"])


def model_to_dict(model: GanModel, fingerprint: str = "") -> dict:
    return {
        "format": MODEL_FORMAT,
        "fingerprint": fingerprint,
        "config": asdict(model.config),
        "generator": [_layer_to_dict(l) for l in model.generator.layers],
        "discriminator": [_layer_to_dict(l) for l in model.discriminator.layers],
        "scaler": model.scaler,
    }


def model_from_dict(d: dict) -> GanModel:
    if d.get("format") != MODEL_FORMAT:
        raise ConfigError(f"not a model file (format={d.get('format')!r})")
    config = GanConfig(**d["config"])
    return GanModel(
        generator=Network([_layer_from_dict(l) for l in d["generator"]]),
        discriminator=Network([_layer_from_dict(l) for l in d["discriminator"]]),
        config=config,
        generator_opt=AdamState(config.adam_lr, config.adam_beta1, config.adam_beta2, config.adam_eps),
        discriminator_opt=SgdState(config.sgd_lr),
        scaler=d.get("scaler"),
    )


def save_model(model: GanModel, path, fingerprint: str = "") -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, fingerprint), indent=1) + "\n")


def load_model(path) -> GanModel:
    return model_from_dict(json.loads(Path(path).read_text()))
