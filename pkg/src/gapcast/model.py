"""Three-pathway residual CNN over (GASF, GADF, REC) images plus an external-feature net.

Each image type runs through its own stack: one convolution with ReLU,
then ``L`` residual units. The three stacks are flattened and concatenated;
in main mode the external branch (embedded day type and weather tokens plus
raw temperature, through one dense layer) is appended. A dense head
regresses the raw next-step gap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Sequence

import numpy as np

from . import nn
from .config import ForecastConfig
from .errors import CheckpointError, NumericError, SeriesTooShortError, ShapeError
from .imaging import KINDS, ImageTriple, encode
from .ingest import DAY_TYPE_VOCAB, ExternalRecord, Vocabulary
from .nn import Tensor
from .series import GapSeries, WindowBlock, segment

log = logging.getLogger(__name__)

EARLY_STOP_DELTA = 1e-6
EARLY_STOP_PATIENCE = 5


@dataclass(frozen=True)
class EncodedSample:
    images: ImageTriple
    target: float
    external_tokens: tuple[int, int] = (0, 0)
    temperature: float = 0.0
    scale_meta: tuple[float, float] = (0.0, 0.0)
    target_index: int = -1
    target_time: datetime | None = None


def _external_lookup(external) -> dict[datetime, ExternalRecord]:
    if external is None:
        return {}
    if isinstance(external, Mapping):
        return dict(external)
    return {r.bin_time: r for r in external}


def encode_external(record: ExternalRecord, weather_vocab: Vocabulary) -> tuple[tuple[int, int], float]:
    return (DAY_TYPE_VOCAB.index(record.day_type), weather_vocab.index(record.weather)), record.temperature


def encode_window(block: WindowBlock, config: ForecastConfig, target_time: datetime | None = None,
                  record: ExternalRecord | None = None,
                  weather_vocab: Vocabulary | None = None) -> EncodedSample:
    tokens, temperature = (0, 0), 0.0
    if record is not None:
        tokens, temperature = encode_external(record, weather_vocab or Vocabulary(()))
    return EncodedSample(
        images=encode(block, config.epsilon, config.rec_on_raw),
        target=block.target,
        external_tokens=tokens,
        temperature=temperature,
        scale_meta=(float(block.raw.min()), float(block.raw.max())),
        target_index=block.target_index,
        target_time=target_time,
    )


def make_samples(series: GapSeries, config: ForecastConfig,
                 external: Sequence[ExternalRecord] | Mapping[datetime, ExternalRecord] | None = None,
                 weather_vocab: Vocabulary | None = None) -> list[EncodedSample]:
    """Slide a window over ``series`` and encode every (window, next bin) pair.

    With ``config.use_external`` every target bin needs an external record.
    """
    lookup = _external_lookup(external)
    samples = []
    for block in segment(series, config.w, config.stride):
        t = series.time_at(block.target_index)
        record = lookup.get(t)
        if config.use_external and record is None:
            raise KeyError(f"no external record for bin {t.isoformat()}")
        samples.append(encode_window(block, config, t, record, weather_vocab))
    return samples


def stack_samples(samples: Sequence[EncodedSample]):
    """Batch arrays: images (N, 3, w, w), tokens (N, 2), temperature (N,), target (N,)."""
    images = np.stack([np.stack(list(s.images)) for s in samples])
    tokens = np.array([s.external_tokens for s in samples], dtype=np.int64).reshape(len(samples), 2)
    temperature = np.array([s.temperature for s in samples], dtype=np.float64)
    target = np.array([s.target for s in samples], dtype=np.float64)
    return images, tokens, temperature, target


@dataclass
class Pathway:
    stem: nn.ConvLayer
    units: list[nn.ResidualUnit]

    def __call__(self, x: Tensor) -> Tensor:
        h = nn.relu(self.stem(x))
        for unit in self.units:
            h = unit(h)
        return h

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.stem.filters": self.stem.filters, f"{prefix}.stem.bias": self.stem.bias}
        for i, u in enumerate(self.units):
            for j, conv in enumerate((u.conv1, u.conv2), start=1):
                out[f"{prefix}.res{i}.conv{j}.filters"] = conv.filters
                out[f"{prefix}.res{i}.conv{j}.bias"] = conv.bias
        return out


@dataclass
class GapForecaster:
    config: ForecastConfig
    pathways: list[Pathway]
    head: list[nn.Dense]
    embedding: nn.EmbeddingTable | None = None
    ext_dense: nn.Dense | None = None
    weather_vocab: Vocabulary = field(default_factory=lambda: Vocabulary(()))
    training_log: list[float] = field(default_factory=list)

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for kind, pathway in zip(KINDS, self.pathways):
            params.update(pathway.named_parameters(kind))
        if self.embedding is not None:
            params["ext.embedding.weights"] = self.embedding.weights
            params["ext.dense.weights"] = self.ext_dense.weights
            params["ext.dense.bias"] = self.ext_dense.bias
        for i, layer in enumerate(self.head):
            params[f"head{i}.weights"] = layer.weights
            params[f"head{i}.bias"] = layer.bias
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    @property
    def day_vocab(self) -> Vocabulary:
        return DAY_TYPE_VOCAB

    def forward_arrays(self, images: np.ndarray, tokens=None, temperature=None) -> Tensor:
        """Predictions (N,) for images (N, 3, w, w) plus external tokens (N, 2) and temperature (N,)."""
        w = self.config.w
        if images.ndim != 4 or images.shape[1:] != (3, w, w):
            raise ShapeError(f"expected images of shape (N, 3, {w}, {w}), got {images.shape}")
        n = images.shape[0]
        feats = [nn.flatten(p(Tensor(images[:, i:i + 1]))) for i, p in enumerate(self.pathways)]
        if self.embedding is not None:
            tokens = np.asarray(tokens, dtype=np.int64).reshape(n, 2)
            offset = np.array([0, len(DAY_TYPE_VOCAB)])
            temp = Tensor(np.asarray(temperature, dtype=np.float64).reshape(n, 1))
            ext_in = nn.concat([self.embedding(tokens + offset), temp], axis=1)
            feats.append(self.ext_dense(ext_in))
        h = nn.concat(feats, axis=1)
        for i, layer in enumerate(self.head):
            h = layer(h)
            if i < len(self.head) - 1:
                h = nn.relu(h)
        return nn.reshape(h, (n,))

    def forward_samples(self, samples: Sequence[EncodedSample]) -> Tensor:
        images, tokens, temperature, _ = stack_samples(samples)
        return self.forward_arrays(images, tokens, temperature)

    def predict_samples(self, samples: Sequence[EncodedSample], batch_size: int = 256) -> np.ndarray:
        out = [self.forward_samples(samples[i:i + batch_size]).data
               for i in range(0, len(samples), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)


def expected_parameter_count(config: ForecastConfig, vocab_size: int = 0) -> int:
    """Closed-form parameter count for ``config``; ``vocab_size`` is the joint token count."""
    n, m = config.filter_size
    c = config.channels
    pathway = (c * n * m + c) + config.L * 2 * (c * c * n * m + c)
    head_in = 3 * c * config.w * config.w
    ext = 0
    if config.use_external:
        ext = vocab_size * config.embed_dim + (2 * config.embed_dim + 1) * config.ext_width + config.ext_width
        head_in += config.ext_width
    head, width = 0, head_in
    for out in config.head_widths:
        head += width * out + out
        width = out
    return 3 * pathway + ext + head


def build(config: ForecastConfig, weather_vocab: Vocabulary | None = None) -> GapForecaster:
    """Seeded, deterministic initialisation of a fresh model for ``config``."""
    weather_vocab = weather_vocab or Vocabulary(())
    init_seq, _ = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(init_seq)
    c, size = config.channels, config.filter_size
    pathways = []
    for kind in KINDS:
        stem = nn.ConvLayer.create(rng, 1, c, size, f"{kind}.stem")
        units = [nn.ResidualUnit.create(rng, c, size, config.use_residual, f"{kind}.res{i}")
                 for i in range(config.L)]
        pathways.append(Pathway(stem, units))
    width = 3 * c * config.w * config.w
    embedding = ext_dense = None
    if config.use_external:
        vocab_size = len(DAY_TYPE_VOCAB) + len(weather_vocab)
        embedding = nn.EmbeddingTable.create(rng, vocab_size, config.embed_dim, "ext.embedding")
        ext_dense = nn.Dense.create(rng, 2 * config.embed_dim + 1, config.ext_width, "ext.dense")
        width += config.ext_width
    head = []
    for i, out in enumerate(config.head_widths):
        head.append(nn.Dense.create(rng, width, out, f"head{i}"))
        width = out
    return GapForecaster(config, pathways, head, embedding, ext_dense, weather_vocab)


def forward(model: GapForecaster, sample: EncodedSample) -> float:
    return float(model.forward_samples([sample]).data[0])


def _shuffle_rng(config: ForecastConfig) -> np.random.Generator:
    _, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    return np.random.default_rng(shuffle_seq)


def train(model: GapForecaster, samples: Sequence[EncodedSample],
          config: ForecastConfig | None = None) -> GapForecaster:
    """Minibatch training on the mean squared error; appends epoch mean losses to ``training_log``.

    Stops after ``config.epochs`` epochs, or earlier once the epoch loss has
    improved by less than 1e-6 for 5 epochs in a row.
    """
    config = config or model.config
    if len(samples) < config.batch_size:
        raise ValueError(f"{len(samples)} training samples is fewer than one batch of {config.batch_size}")
    images, tokens, temperature, target = stack_samples(samples)
    opt = nn.make_optimizer(config.optimizer, model.parameters(), config.learning_rate)
    rng = _shuffle_rng(config)
    n = len(samples)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size), start=1):
            idx = order[start:start + config.batch_size]
            # overflow surfaces as a non-finite loss, reported below with context
            with np.errstate(over="ignore", invalid="ignore"):
                pred = model.forward_arrays(images[idx], tokens[idx], temperature[idx])
                loss = nn.mse_loss(pred, target[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {b}, "
                                   f"learning rate {config.learning_rate}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(idx)
        epoch_loss = total / n
        previous = model.training_log[-1] if model.training_log else None
        model.training_log.append(epoch_loss)
        log.info("epoch %d loss %.6g", epoch, epoch_loss)
        if previous is not None and previous - epoch_loss < EARLY_STOP_DELTA:
            stale += 1
            if stale >= EARLY_STOP_PATIENCE:
                log.info("early stop after epoch %d", epoch)
                break
        else:
            stale = 0
    return model


def predict(model: GapForecaster, series: GapSeries, external: ExternalRecord | None = None) -> float:
    """Forecast the bin right after ``series`` from its last ``w`` values."""
    w = model.config.w
    if len(series) < w:
        raise SeriesTooShortError(len(series), w)
    if model.config.use_external and external is None:
        raise KeyError(f"no external record for bin {series.end_time.isoformat()}")
    block = WindowBlock.from_raw(series.values[-w:], origin_index=len(series) - w)
    sample = encode_window(block, model.config, series.end_time, external, model.weather_vocab)
    return forward(model, sample)


def save_model(model: GapForecaster, stem, meta: dict | None = None):
    """Write ``<stem>.json`` + ``<stem>.bin``; config and vocabulary travel in the manifest."""
    info = {
        "config": model.config.to_dict(),
        "weather_vocab": list(model.weather_vocab.tokens),
        "training_log": list(model.training_log),
    }
    info.update(meta or {})
    return nn.save_checkpoint(stem, model.state(), seed=model.config.seed,
                              config_hash=model.config.digest(), meta=info)


def load_model(stem, config: ForecastConfig | None = None) -> GapForecaster:
    """Rebuild a model from a checkpoint.

    If ``config`` is given, its architecture must match the checkpoint's.
    """
    manifest, arrays = nn.load_checkpoint(stem)
    meta = manifest["meta"]
    stored = ForecastConfig(**meta["config"])
    if config is not None and config.architecture() != stored.architecture():
        diff = {k: (v, stored.architecture()[k]) for k, v in config.architecture().items()
                if stored.architecture()[k] != v}
        raise CheckpointError(f"config does not match checkpoint architecture: {diff}")
    model = build(stored, Vocabulary(tuple(meta.get("weather_vocab", ()))))
    nn.assign_arrays(model.named_parameters(), arrays)
    model.training_log = list(meta.get("training_log", []))
    return model
