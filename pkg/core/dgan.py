"""
DoppelGANger-style generator and Wasserstein critics.

Generation runs in three stages:
    1. attribute MLP:  z_a -> indicator attributes (sigmoid, thresholded at 0.5 when sampling)
    2. min/max MLP:    [attributes ; z_m] -> per-feature midpoint and halfrange
    3. sequence LSTM:  [attributes ; minmax ; z_t] -> S steps per pass, T/S passes

Series are generated in per-sample min/max normalized space ([-1, 1], tanh
head) and rescaled with the generated metadata. A primary critic scores
attributes + metadata + series; an auxiliary critic scores attributes +
metadata only. Both are trained as WGAN-GP critics by default.
"""

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist

from core import autodiff as ad
from core.autodiff import Tape, Tensor
from core.datasets import FEATURE_NAMES, SampleSet
from core.interfaces.model import BaseModel
from core.nets import (AdamState, DenseLayer, LSTMCell, adam_step, dropout_mask, forward_layers,
                       init_layers, lstm_cell_step, mlp_layers)
from utils.errors import ConfigError, DataError, NumericalError, ShapeError, TrainingDivergedError
from utils.logger import get_logger
from utils.seeding import SeedLineage

logger = get_logger(__name__)

MIDPOINT_PREFIX = 'mid_'
HALFRANGE_PREFIX = 'half_'


@dataclass
class DGanConfig:
    """
    Every knob of the generator, the critics and the training loop.

    Defaults are the full-scale settings: 125-day samples emitted 5 days per
    LSTM pass, both learning rates 1e-4, 2000 epochs.
    """

    sample_length: int = 125
    steps_per_pass: int = 5
    attribute_latent_dim: int = 8
    minmax_latent_dim: int = 8
    sequence_latent_dim: int = 8
    attribute_hidden: Tuple[int, ...] = (64, 64)
    minmax_hidden: Tuple[int, ...] = (64, 64)
    lstm_hidden: int = 128
    critic_hidden: Tuple[int, ...] = (128, 128, 128)
    aux_critic_hidden: Tuple[int, ...] = (64, 64)
    critic_dropout: float = 0.3
    alpha: float = 1.0
    critic_steps: int = 1
    generator_lr: float = 1e-4
    critic_lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    epochs: int = 2000
    batch_size: int = 32
    use_gradient_penalty: bool = True
    gradient_penalty: float = 10.0
    clip_value: float = 0.01
    max_iterations: Optional[int] = None
    diversity_sample: int = 64
    normalization_eps: float = 1e-8
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in ('attribute_hidden', 'minmax_hidden', 'critic_hidden', 'aux_critic_hidden'):
            setattr(self, name, tuple(int(w) for w in getattr(self, name)))
        self.validate()

    @property
    def passes(self) -> int:
        return self.sample_length // self.steps_per_pass

    def validate(self) -> None:
        if self.sample_length <= 0 or self.steps_per_pass <= 0:
            raise ConfigError("sample_length and steps_per_pass must be positive")
        if self.sample_length % self.steps_per_pass != 0:
            raise ConfigError(
                f"sample_length {self.sample_length} is not divisible by steps_per_pass {self.steps_per_pass}"
            )
        if self.critic_steps < 1:
            raise ConfigError(f"critic_steps must be >= 1, got {self.critic_steps}")
        if self.generator_lr <= 0 or self.critic_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.critic_dropout < 1.0:
            raise ConfigError(f"critic_dropout must be in [0, 1), got {self.critic_dropout}")
        if self.gradient_penalty < 0 or self.clip_value <= 0:
            raise ConfigError("gradient_penalty must be >= 0 and clip_value > 0")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1 when set")
        if min(self.attribute_latent_dim, self.minmax_latent_dim, self.sequence_latent_dim, self.lstm_hidden) < 1:
            raise ConfigError("latent dims and lstm_hidden must be >= 1")
        if self.diversity_sample < 2:
            raise ConfigError("diversity_sample must be >= 2")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DGanConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown DGAN config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid DGAN config: {e}") from e


# ---------------------------------------------------------------------------
# Per-sample min/max normalization
# ---------------------------------------------------------------------------

@dataclass
class Normalizer:
    """midpoint and halfrange per sample and feature, both (n, F)."""

    midpoint: np.ndarray
    halfrange: np.ndarray
    eps: float = 1e-8

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.midpoint[:, None, :]) / self.halfrange[:, None, :]

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        return denormalize(normalized, self.midpoint, self.halfrange)


def normalize_samples(samples: SampleSet, eps: float = 1e-8) -> Tuple[SampleSet, Normalizer]:
    """
    Map each sample/feature into [-1, 1] by its own min and max.

    The midpoint (min+max)/2 and halfrange (max-min)/2 (floored at eps) are
    appended to the attributes as `mid_<feature>` and `half_<feature>`.
    """
    if len(samples) == 0:
        raise DataError("Cannot normalize an empty sample set")
    lo = samples.features.min(axis=1)
    hi = samples.features.max(axis=1)
    midpoint = (lo + hi) / 2.0
    halfrange = np.maximum((hi - lo) / 2.0, eps)
    normalizer = Normalizer(midpoint=midpoint, halfrange=halfrange, eps=eps)

    schema = list(samples.attribute_schema)
    schema += [MIDPOINT_PREFIX + f for f in samples.feature_names]
    schema += [HALFRANGE_PREFIX + f for f in samples.feature_names]
    normalized = SampleSet(
        features=normalizer.normalize(samples.features),
        attributes=np.concatenate([samples.attributes, midpoint, halfrange], axis=1),
        attribute_schema=schema,
        feature_names=list(samples.feature_names),
        provenance=samples.provenance,
        start_dates=samples.start_dates,
    )
    return normalized, normalizer


def denormalize(sample: np.ndarray, midpoint: np.ndarray, halfrange: np.ndarray) -> np.ndarray:
    """
    x * halfrange + midpoint.

    Accepts one (T, F) sample with (F,) metadata or a (n, T, F) batch with (n, F) metadata.
    """
    sample = np.asarray(sample, dtype=np.float64)
    midpoint = np.asarray(midpoint, dtype=np.float64)
    halfrange = np.asarray(halfrange, dtype=np.float64)
    if np.any(halfrange < 0):
        raise DataError("halfrange must be non-negative")
    if not (np.all(np.isfinite(midpoint)) and np.all(np.isfinite(halfrange))):
        raise NumericalError("min/max metadata is not finite")
    if sample.ndim == 3:
        return sample * halfrange[:, None, :] + midpoint[:, None, :]
    if sample.ndim == 2:
        return sample * halfrange[None, :] + midpoint[None, :]
    raise ShapeError(f"denormalize expects (T, F) or (n, T, F), got {sample.shape}")


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

@dataclass
class Latents:
    """Noise inputs for one batch: (n, Za), (n, Zm), (n, passes, Zt)."""

    attribute: np.ndarray
    minmax: np.ndarray
    sequence: np.ndarray

    def __len__(self) -> int:
        return self.attribute.shape[0]


@dataclass
class GanBatch:
    """
    Attributes, scaled min/max metadata and normalized series for n samples.

    The same structure carries real batches (constants) and generator output.
    """

    attributes: Tensor
    minmax: Tensor
    series: Tensor

    def __len__(self) -> int:
        return self.series.shape[0]

    def metadata_input(self) -> Tensor:
        return ad.concat([self.attributes, self.minmax], axis=1)

    def series_input(self) -> Tensor:
        n, T, F = self.series.shape
        return ad.concat([self.attributes, self.minmax, ad.reshape(self.series, (n, T * F))], axis=1)


def sample_latents(config: DGanConfig, n: int, rng: np.random.Generator) -> Latents:
    return Latents(
        attribute=rng.standard_normal((n, config.attribute_latent_dim)),
        minmax=rng.standard_normal((n, config.minmax_latent_dim)),
        sequence=rng.standard_normal((n, config.passes, config.sequence_latent_dim)),
    )


class GeneratorBundle(BaseModel):
    """
    The three generator stages and the metadata scaling they were trained with.

    Midpoints are modelled standardized by the training set's mean/std and
    halfranges divided by the training set's mean halfrange; `statistics()`
    carries those constants so a loaded bundle generates in yield units.
    """

    kind = 'dgan'

    def __init__(self, config: DGanConfig, attribute_schema: Sequence[str],
                 feature_names: Sequence[str] = FEATURE_NAMES,
                 metadata_stats: Optional[Dict[str, List[float]]] = None,
                 params: Optional[Dict[str, np.ndarray]] = None,
                 rng: Optional[np.random.Generator] = None):
        self.config = config
        self.attribute_schema = list(attribute_schema)
        self.feature_names = list(feature_names)
        F = len(self.feature_names)
        A = len(self.attribute_schema)
        stats = metadata_stats or {'mid_mean': [0.0] * F, 'mid_std': [1.0] * F, 'half_scale': [1.0] * F}
        self.mid_mean = np.asarray(stats['mid_mean'], dtype=np.float64)
        self.mid_std = np.asarray(stats['mid_std'], dtype=np.float64)
        self.half_scale = np.asarray(stats['half_scale'], dtype=np.float64)

        self.attribute_layers = mlp_layers(
            'attr', config.attribute_latent_dim, config.attribute_hidden, A, 'tanh', 'sigmoid'
        ) if A else []
        self.minmax_layers = mlp_layers('minmax', A + config.minmax_latent_dim, config.minmax_hidden, 2 * F)
        self.cell = LSTMCell('seq.lstm', A + 2 * F + config.sequence_latent_dim, config.lstm_hidden)
        self.head = DenseLayer('seq.head', config.lstm_hidden, config.steps_per_pass * F, 'tanh')

        if params is None:
            rng = rng if rng is not None else np.random.default_rng(config.seed)
            params = init_layers(self.attribute_layers + self.minmax_layers + [self.cell, self.head], rng)
        self.params = params

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_schema)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def config_snapshot(self) -> Dict[str, Any]:
        return self.config.to_dict()

    def statistics(self) -> Dict[str, Any]:
        return {
            'attribute_schema': self.attribute_schema,
            'feature_names': self.feature_names,
            'mid_mean': self.mid_mean.tolist(),
            'mid_std': self.mid_std.tolist(),
            'half_scale': self.half_scale.tolist(),
        }

    @classmethod
    def from_state(cls, params, config, statistics) -> 'GeneratorBundle':
        return cls(
            DGanConfig.from_dict(config),
            attribute_schema=statistics['attribute_schema'],
            feature_names=statistics['feature_names'],
            metadata_stats=statistics,
            params={k: np.array(v) for k, v in params.items()},
        )

    def scale_metadata(self, midpoint: np.ndarray, halfrange: np.ndarray) -> np.ndarray:
        """Yield-unit metadata -> the (n, 2F) scale the generator and critics work in."""
        return np.concatenate([(midpoint - self.mid_mean) / self.mid_std, halfrange / self.half_scale], axis=1)

    def unscale_metadata(self, minmax: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        F = self.n_features
        return minmax[:, :F] * self.mid_std + self.mid_mean, minmax[:, F:] * self.half_scale

    def forward(self, p, latents: Latents, threshold_attributes: bool = False) -> GanBatch:
        """
        Run the generator chain.

        Args:
            p: Parameter binding (tape leaves or constants)
            latents: Noise for the batch
            threshold_attributes: Round attributes to 0/1 before conditioning the later stages

        Returns:
            GanBatch with series of shape (n, T, F) in [-1, 1]
        """
        n, F, S = len(latents), self.n_features, self.config.steps_per_pass
        if latents.sequence.shape[1] != self.config.passes:
            raise ShapeError(f"expected {self.config.passes} sequence latents per sample")

        if self.n_attributes:
            attributes = forward_layers(self.attribute_layers, p, ad.constant(latents.attribute))
            if threshold_attributes:
                attributes = ad.constant((attributes.data >= 0.5).astype(np.float64))
        else:
            attributes = ad.constant(np.zeros((n, 0)))

        raw = forward_layers(self.minmax_layers, p, ad.concat([attributes, ad.constant(latents.minmax)], axis=1))
        minmax = ad.concat([raw[:, :F], ad.softplus(raw[:, F:])], axis=1)
        condition = ad.concat([attributes, minmax], axis=1)

        h = ad.constant(np.zeros((n, self.cell.hidden_dim)))
        c = ad.constant(np.zeros((n, self.cell.hidden_dim)))
        chunks = []
        for k in range(self.config.passes):
            x = ad.concat([condition, ad.constant(latents.sequence[:, k, :])], axis=1)
            h, c = lstm_cell_step(self.cell, p, x, h, c)
            chunks.append(ad.reshape(self.head(p, h), (n, S, F)))
        series = ad.concat(chunks, axis=1)
        return GanBatch(attributes=attributes, minmax=minmax, series=series)


@dataclass
class GeneratedBatch:
    """Numpy output of generate_batch."""

    attributes: np.ndarray
    midpoint: np.ndarray
    halfrange: np.ndarray
    normalized: np.ndarray

    def denormalized(self) -> np.ndarray:
        return denormalize(self.normalized, self.midpoint, self.halfrange)


def generate_batch(bundle: GeneratorBundle, n: int, seed: int, chunk_size: int = 512) -> GeneratedBatch:
    """
    Sample n generator outputs without recording a tape.

    Each sample draws its latents from its own stream spawned from `seed`,
    so sample i is the same whatever n or chunk_size is.
    """
    if n <= 0:
        raise ConfigError(f"Number of samples must be positive, got {n}")
    cfg = bundle.config
    streams = np.random.SeedSequence(int(seed)).spawn(n)
    p = bundle.bind()
    parts = []
    for start in range(0, n, chunk_size):
        chunk = [sample_latents(cfg, 1, np.random.default_rng(s)) for s in streams[start:start + chunk_size]]
        latents = Latents(
            attribute=np.concatenate([z.attribute for z in chunk]),
            minmax=np.concatenate([z.minmax for z in chunk]),
            sequence=np.concatenate([z.sequence for z in chunk]),
        )
        parts.append(bundle.forward(p, latents, threshold_attributes=True))

    minmax = np.concatenate([b.minmax.data for b in parts])
    midpoint, halfrange = bundle.unscale_metadata(minmax)
    return GeneratedBatch(
        attributes=np.concatenate([b.attributes.data for b in parts]),
        midpoint=midpoint,
        halfrange=halfrange,
        normalized=np.concatenate([b.series.data for b in parts]),
    )


def generate(bundle: GeneratorBundle, n: int, seed: int, clip_negative: bool = False) -> SampleSet:
    """
    Generate n synthetic samples in yield units.

    Args:
        bundle: Trained or freshly initialized generator
        n: Number of samples
        seed: Generation seed
        clip_negative: Clip negative yields at 0 (off by default so fidelity sees raw output)

    Returns:
        SampleSet with provenance 'synthetic' and the bundle's attribute schema
    """
    batch = generate_batch(bundle, n, seed)
    features = batch.denormalized()
    if clip_negative:
        negatives = int((features < 0).sum())
        if negatives:
            logger.info(f"Clipping {negatives} negative generated yields at 0")
        features = np.maximum(features, 0.0)
    if not np.all(np.isfinite(features)):
        raise NumericalError("generator produced non-finite values")
    return SampleSet(
        features=features,
        attributes=batch.attributes,
        attribute_schema=list(bundle.attribute_schema),
        feature_names=list(bundle.feature_names),
        provenance='synthetic',
    )


# ---------------------------------------------------------------------------
# Critics and losses
# ---------------------------------------------------------------------------

class Critics:
    """
    Primary critic D over attributes + metadata + flattened series and
    auxiliary critic D_aux over attributes + metadata. Both are tanh MLPs
    with dropout after every hidden layer and an unbounded scalar output.
    """

    def __init__(self, config: DGanConfig, n_attributes: int, n_features: int,
                 params: Optional[Dict[str, np.ndarray]] = None,
                 rng: Optional[np.random.Generator] = None):
        self.alpha = config.alpha
        self.dropout = config.critic_dropout
        metadata_dim = n_attributes + 2 * n_features
        self.primary_layers = mlp_layers('critic', metadata_dim + config.sample_length * n_features,
                                         config.critic_hidden, 1)
        self.aux_layers = mlp_layers('aux_critic', metadata_dim, config.aux_critic_hidden, 1)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(config.seed)
            params = init_layers(self.primary_layers + self.aux_layers, rng)
        self.params = params

    def bind(self, tape: Optional[Tape] = None) -> Dict[str, Tensor]:
        return ad.constants(self.params) if tape is None else tape.leaves(self.params)

    def clip(self, value: float) -> None:
        for array in self.params.values():
            np.clip(array, -value, value, out=array)


def _critic_forward(layers: Sequence[DenseLayer], p, x: Tensor, rate: float, training: bool,
                    rng: Optional[np.random.Generator]):
    """Scores (n, 1) plus the tanh activations and dropout masks of every hidden layer."""
    activations, masks = [], []
    a = x
    for layer in layers[:-1]:
        t = layer(p, a)
        mask = None
        if training and rate > 0:
            if rng is None:
                raise ValueError("critic dropout in training mode needs an rng")
            mask = dropout_mask(t.shape, rate, rng)
            a = ad.mul(t, ad.constant(mask))
        else:
            a = t
        activations.append(t)
        masks.append(mask)
    return layers[-1](p, a), activations, masks


def critic_input_gradient(layers: Sequence[DenseLayer], p, activations, masks, n: int) -> Tensor:
    """
    d sum(scores) / d input, written out as tape operations on the parameters.

    Backpropagating by hand through the tanh MLP keeps the result a
    differentiable function of the critic weights, so the gradient penalty
    needs only first-order reverse mode.
    """
    delta = ad.matmul(ad.constant(np.ones((n, 1))), p[layers[-1].weight])
    for layer, t, mask in reversed(list(zip(layers[:-1], activations, masks))):
        if mask is not None:
            delta = ad.mul(delta, ad.constant(mask))
        delta = ad.mul(delta, ad.sub(1.0, ad.square(t)))
        delta = ad.matmul(delta, p[layer.weight])
    return delta


def gradient_penalty(layers: Sequence[DenseLayer], p, real: Tensor, fake: Tensor, rate: float,
                     training: bool, rng: np.random.Generator) -> Tensor:
    """mean((||grad D(x_hat)|| - 1)^2) on random interpolates x_hat of real and fake rows."""
    n = real.shape[0]
    mix = rng.random((n, 1))
    x_hat = ad.constant(mix * real.data + (1.0 - mix) * fake.data)
    _, activations, masks = _critic_forward(layers, p, x_hat, rate, training, rng)
    grad = critic_input_gradient(layers, p, activations, masks, n)
    norm = ad.sqrt(ad.add(ad.sum_(ad.square(grad), axis=1), 1e-12))
    return ad.mean(ad.square(ad.sub(norm, 1.0)))


def _wasserstein(layers, p, real_x: Tensor, fake_x: Tensor, rate: float, training: bool,
                 rng: Optional[np.random.Generator], penalty: float) -> Tensor:
    d_real, _, _ = _critic_forward(layers, p, real_x, rate, training, rng)
    d_fake, _, _ = _critic_forward(layers, p, fake_x, rate, training, rng)
    loss = ad.sub(ad.mean(d_fake), ad.mean(d_real))
    if penalty > 0:
        if rng is None:
            raise ValueError("gradient penalty needs an rng for the interpolation weights")
        loss = ad.add(loss, ad.scale(gradient_penalty(layers, p, real_x, fake_x, rate, training, rng), penalty))
    return loss


def critic_losses(critics: Critics, p, real: GanBatch, fake: GanBatch, training: bool = False,
                  rng: Optional[np.random.Generator] = None,
                  penalty: float = 0.0) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Wasserstein critic losses.

    Each critic's loss is mean D(fake) - mean D(real), plus penalty times the
    gradient penalty when penalty > 0.

    Returns:
        (primary, auxiliary, primary + alpha * auxiliary)
    """
    real_x, fake_x = real.series_input(), fake.series_input()
    if real_x.shape[1:] != fake_x.shape[1:]:
        raise ShapeError(f"real batch {real_x.shape} and fake batch {fake_x.shape} do not match")
    primary = _wasserstein(critics.primary_layers, p, real_x, fake_x, critics.dropout, training, rng, penalty)
    auxiliary = _wasserstein(critics.aux_layers, p, real.metadata_input(), fake.metadata_input(),
                             critics.dropout, training, rng, penalty)
    combined = ad.add(primary, ad.scale(auxiliary, critics.alpha))
    return primary, auxiliary, combined


def generator_loss(critics: Critics, p, fake: GanBatch, training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
    """-(mean D(fake) + alpha * mean D_aux(fake metadata))."""
    d_fake, _, _ = _critic_forward(critics.primary_layers, p, fake.series_input(), critics.dropout, training, rng)
    score = ad.mean(d_fake)
    if critics.alpha != 0:
        d_aux, _, _ = _critic_forward(critics.aux_layers, p, fake.metadata_input(), critics.dropout, training, rng)
        score = ad.add(score, ad.scale(ad.mean(d_aux), critics.alpha))
    return ad.scale(score, -1.0)


# ---------------------------------------------------------------------------
# Diversity
# ---------------------------------------------------------------------------

def _diversity(features: np.ndarray) -> float:
    lo, hi = features.min(axis=1, keepdims=True), features.max(axis=1, keepdims=True)
    halfrange = np.maximum((hi - lo) / 2.0, 1e-8)
    flat = ((features - (lo + hi) / 2.0) / halfrange).reshape(len(features), -1)
    mean_norm = float(np.linalg.norm(flat, axis=1).mean())
    if mean_norm == 0.0:
        return 0.0
    return float(pdist(flat, 'euclidean').mean() / mean_norm)


def diversity_score(samples) -> float:
    """
    Mean pairwise L2 distance between flattened min/max-normalized samples,
    divided by the mean sample norm. 0 when all samples are identical.

    Args:
        samples: SampleSet or (n, T, F) array
    """
    features = samples.features if isinstance(samples, SampleSet) else np.asarray(samples, dtype=np.float64)
    if features.ndim != 3:
        raise ShapeError(f"diversity_score expects (n, T, F) samples, got {features.shape}")
    if len(features) < 2:
        raise DataError("diversity_score needs at least 2 samples")
    return _diversity(features)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    critic_loss: float
    aux_loss: float
    gen_loss: float
    diversity: float


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)
    iterations: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        columns = ['epoch', 'critic_loss', 'aux_loss', 'gen_loss', 'diversity']
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


class DGanTrainer:
    """
    Alternating WGAN training: critic_steps critic updates, then one
    generator update, both with Adam.
    """

    def __init__(self, config: DGanConfig, data: SampleSet):
        if len(data) == 0:
            raise DataError("Cannot train on an empty sample set")
        if data.T != config.sample_length:
            raise ConfigError(f"Samples have T={data.T} but the config expects {config.sample_length}")
        for name in data.attribute_schema:
            if not np.isin(data.attribute(name), [0.0, 1.0]).all():
                raise DataError(f"Attribute '{name}' is not a 0/1 indicator")

        self.config = config
        self.lineage = SeedLineage(config.seed)
        normalized, normalizer = normalize_samples(data, config.normalization_eps)

        mid_std = normalizer.midpoint.std(axis=0)
        stats = {
            'mid_mean': normalizer.midpoint.mean(axis=0).tolist(),
            'mid_std': np.where(mid_std > config.normalization_eps, mid_std, 1.0).tolist(),
            'half_scale': np.maximum(normalizer.halfrange.mean(axis=0), config.normalization_eps).tolist(),
        }
        self.bundle = GeneratorBundle(config, data.attribute_schema, data.feature_names, stats,
                                      rng=self.lineage.rng('dgan.init.generator'))
        self.critics = Critics(config, len(data.attribute_schema), data.F,
                               rng=self.lineage.rng('dgan.init.critics'))

        self.real_attributes = data.attributes
        self.real_minmax = self.bundle.scale_metadata(normalizer.midpoint, normalizer.halfrange)
        self.real_series = normalized.features

        self.shuffle_rng = self.lineage.rng('dgan.shuffle')
        self.latent_rng = self.lineage.rng('dgan.latent')
        self.critic_rng = self.lineage.rng('dgan.critic')
        self.diversity_seed = self.lineage.seed_for('dgan.diversity')

        betas = dict(beta1=config.adam_beta1, beta2=config.adam_beta2)
        self.critic_opt = AdamState(learning_rate=config.critic_lr, **betas)
        self.generator_opt = AdamState(learning_rate=config.generator_lr, **betas)
        self.history = TrainingHistory()
        self._critic_updates = 0

    def _real_batch(self, index: np.ndarray) -> GanBatch:
        return GanBatch(
            attributes=ad.constant(self.real_attributes[index]),
            minmax=ad.constant(self.real_minmax[index]),
            series=ad.constant(self.real_series[index]),
        )

    def _check(self, name: str, value: float) -> float:
        if not math.isfinite(value):
            raise TrainingDivergedError(
                f"{name} became non-finite at iteration {self.history.iterations}", history=self.history
            )
        return value

    def _apply(self, params, grads, opt: AdamState, name: str) -> None:
        try:
            adam_step(params, grads, opt)
        except NumericalError as e:
            raise TrainingDivergedError(f"{name} update failed: {e}", history=self.history) from e

    def critic_step(self, index: np.ndarray) -> Tuple[float, float]:
        cfg = self.config
        fake = self.bundle.forward(self.bundle.bind(), sample_latents(cfg, len(index), self.latent_rng))
        tape = Tape()
        p = self.critics.bind(tape)
        penalty = cfg.gradient_penalty if cfg.use_gradient_penalty else 0.0
        _, aux, combined = critic_losses(self.critics, p, self._real_batch(index), fake,
                                         training=True, rng=self.critic_rng, penalty=penalty)
        self._check('critic loss', combined.item())
        self._apply(self.critics.params, ad.backward(tape, combined).for_params(p), self.critic_opt, 'critic')
        if not cfg.use_gradient_penalty:
            self.critics.clip(cfg.clip_value)
        return combined.item(), aux.item()

    def generator_step(self, n: int, update: bool = True) -> float:
        tape = Tape()
        p = self.bundle.bind(tape)
        fake = self.bundle.forward(p, sample_latents(self.config, n, self.latent_rng))
        loss = generator_loss(self.critics, self.critics.bind(), fake, training=True, rng=self.critic_rng)
        self._check('generator loss', loss.item())
        if update:
            self._apply(self.bundle.params, ad.backward(tape, loss).for_params(p), self.generator_opt, 'generator')
        return loss.item()

    def diversity(self) -> float:
        batch = generate_batch(self.bundle, self.config.diversity_sample, self.diversity_seed)
        return _diversity(batch.denormalized())

    def train(self) -> Tuple[GeneratorBundle, TrainingHistory]:
        cfg = self.config
        n = len(self.real_series)
        logger.info(
            f"🧠 Training DGAN on {n} samples (T={cfg.sample_length}, S={cfg.steps_per_pass}, "
            f"{cfg.passes} passes, {self.bundle.num_parameters()} generator parameters)"
        )
        done = False
        for epoch in range(1, cfg.epochs + 1):
            order = self.shuffle_rng.permutation(n)
            critic_losses_, aux_losses, gen_losses = [], [], []
            for start in range(0, n, cfg.batch_size):
                index = order[start:start + cfg.batch_size]
                combined, aux = self.critic_step(index)
                critic_losses_.append(combined)
                aux_losses.append(aux)
                self._critic_updates += 1
                if self._critic_updates % cfg.critic_steps == 0:
                    gen_losses.append(self.generator_step(len(index)))
                    self.history.iterations += 1
                    logger.debug(
                        f"iter {self.history.iterations}: critic {combined:.6f} aux {aux:.6f} gen {gen_losses[-1]:.6f}"
                    )
                    if cfg.max_iterations is not None and self.history.iterations >= cfg.max_iterations:
                        done = True
                        break
            if not gen_losses:
                gen_losses.append(self.generator_step(min(n, cfg.batch_size), update=False))

            record = EpochRecord(
                epoch=epoch,
                critic_loss=float(np.mean(critic_losses_)),
                aux_loss=float(np.mean(aux_losses)),
                gen_loss=float(np.mean(gen_losses)),
                diversity=self.diversity(),
            )
            self._check('diversity', record.diversity)
            self.history.records.append(record)
            if epoch == 1 or epoch % cfg.log_every == 0 or done or epoch == cfg.epochs:
                logger.info(
                    f"Epoch {epoch}/{cfg.epochs}: critic={record.critic_loss:.4f} aux={record.aux_loss:.4f} "
                    f"gen={record.gen_loss:.4f} diversity={record.diversity:.4f}"
                )
            if done:
                logger.info(f"Reached max_iterations={cfg.max_iterations}")
                break
        return self.bundle, self.history


def train_dgan(config: DGanConfig, data: SampleSet) -> Tuple[GeneratorBundle, TrainingHistory]:
    """
    Train a generator bundle on real segments.

    Raises:
        TrainingDivergedError: a loss or gradient became non-finite (history attached)
    """
    return DGanTrainer(config, data).train()
