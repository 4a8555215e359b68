"""CBOW embedding training over mark-up-augmented token sequences.

Words and phenotype mark-up tokens are trained identically: the mean of the
context window's input vectors predicts the centre token against a handful of
noise tokens drawn from the unigram^0.75 distribution. Mark-up tokens are the
learning targets, so they are exempt from frequency subsampling and from the
minimum-count cutoff; rare phenotype/context pairs always receive vectors.

Exported vectors are the input-side vectors. Training is float64 throughout so
analytic gradients can be checked against central finite differences.
"""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import TokenSequence, is_markup_token, parse_markup
from .errors import ModelFormatError, TrainingDivergedError

EpochCallback = Callable[[int, Mapping[str, int], np.ndarray], None]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. ``min_count`` applies to words only."""

    dim: int = 100
    window: int = 5
    epochs: int = 5
    negative_samples: int = 5
    learning_rate: float = 0.025
    min_count: int = 2
    subsample_threshold: float = 1e-3
    seed: int = 1

    def validate(self) -> None:
        positive = {
            "dim": self.dim,
            "window": self.window,
            "epochs": self.epochs,
            "negative_samples": self.negative_samples,
            "learning_rate": self.learning_rate,
            "min_count": self.min_count,
            "subsample_threshold": self.subsample_threshold,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass
class EmbeddingModel:
    """Token -> vector mapping plus the concepts it was trained for."""

    dim: int
    vectors: dict[str, np.ndarray]
    config: TrainConfig
    trained_phenotypes: frozenset[str]

    def vector_of(self, token: str) -> np.ndarray | None:
        """The token's vector (read-only view), or None when out of vocab."""
        return self.vectors.get(token)

    def validate(self) -> None:
        for tok, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"vector for {tok!r} has shape {vec.shape}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"non-finite component in vector for {tok!r}")
        in_vocab = frozenset(
            parse_markup(t).concept for t in self.vectors if is_markup_token(t)
        )
        if in_vocab != self.trained_phenotypes:
            raise ValueError(
                "trained_phenotypes disagrees with mark-up tokens in vocabulary"
            )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward_backward(
    context_vecs: np.ndarray, output_vecs: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and gradients for one training step.

    ``output_vecs[0]`` is the true target's output vector, the remaining rows
    are noise draws. Returns (loss, grad wrt the context mean h, grad wrt
    output_vecs).
    """
    h = context_vecs.mean(axis=0)
    scores = output_vecs @ h
    # -log sigmoid(s0) - sum(log sigmoid(-s_i)), written via logaddexp for stability
    loss = float(np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum())
    g = _sigmoid(scores)
    g[0] -= 1.0
    grad_out = g[:, None] * h[None, :]
    grad_h = g @ output_vecs
    return loss, grad_h, grad_out


def loss_and_gradients(
    context_vecs: np.ndarray, output_vecs: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative-sampling loss with exact analytic gradients.

    Gradient with respect to each context vector is grad_h / m because the
    hidden layer is the arithmetic mean of the m context vectors.
    """
    loss, grad_h, grad_out = _forward_backward(context_vecs, output_vecs)
    grad_ctx = np.tile(grad_h / len(context_vecs), (len(context_vecs), 1))
    return loss, grad_ctx, grad_out


def _draw_negatives(
    rng: np.random.Generator, cdf: np.ndarray, n: int, exclude: int
) -> np.ndarray:
    idx = np.minimum(cdf.searchsorted(rng.random(n), side="right"), len(cdf) - 1)
    while True:
        clash = idx == exclude
        if not clash.any():
            return idx
        redraw = np.minimum(
            cdf.searchsorted(rng.random(int(clash.sum())), side="right"),
            len(cdf) - 1,
        )
        idx[clash] = redraw


def _train_sentences(
    syn0: np.ndarray,
    syn1: np.ndarray,
    sentences: Sequence[np.ndarray],
    keep_prob: np.ndarray,
    cdf: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    lr_at: Callable[[int], float],
    step: int,
    epoch: int,
) -> int:
    window = config.window
    k_neg = config.negative_samples
    running = 0.0
    out_idx = np.empty(1 + k_neg, dtype=np.int64)
    for enc in sentences:
        kept = enc[rng.random(enc.size) < keep_prob[enc]]
        for j in range(kept.size):
            lr = lr_at(step)
            step += 1
            lo = 0 if j < window else j - window
            ctx = np.concatenate((kept[lo:j], kept[j + 1 : j + 1 + window]))
            if ctx.size == 0:
                continue
            out_idx[0] = kept[j]
            out_idx[1:] = _draw_negatives(rng, cdf, k_neg, kept[j])
            loss, grad_h, grad_out = _forward_backward(syn0[ctx], syn1[out_idx])
            running += loss
            # np.add.at accumulates over repeated indices (duplicate context
            # words, colliding negatives)
            np.add.at(syn1, out_idx, -lr * grad_out)
            np.add.at(syn0, ctx, (-lr / ctx.size) * grad_h)
        if not math.isfinite(running):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}, step {step}"
            )
    return step


def train_cbow(
    corpus: Sequence[TokenSequence],
    config: TrainConfig,
    workers: int = 1,
    epoch_callback: EpochCallback | None = None,
) -> EmbeddingModel:
    """Train CBOW with negative sampling over mark-up-injected sequences.

    Single-worker mode is bit-reproducible for a fixed seed. With
    ``workers > 1`` threads update the shared parameters without locking;
    that mode trades reproducibility for throughput and only the quality of
    the result is guaranteed.
    """
    config.validate()
    sentences = [seq.surfaces() for seq in corpus]
    counts = Counter(tok for sent in sentences for tok in sent)
    kept = {
        tok: c
        for tok, c in counts.items()
        if is_markup_token(tok) or c >= config.min_count
    }
    if not kept:
        raise ValueError("empty effective vocabulary after min-count filtering")
    if len(kept) < 2:
        raise ValueError("need at least two vocabulary tokens for negative sampling")
    order = sorted(kept, key=lambda t: (-kept[t], t))
    index = {tok: i for i, tok in enumerate(order)}
    counts_arr = np.array([kept[t] for t in order], dtype=np.float64)

    freq = counts_arr / counts_arr.sum()
    keep_prob = np.minimum(1.0, np.sqrt(config.subsample_threshold / freq))
    markup_mask = np.array([is_markup_token(t) for t in order])
    keep_prob[markup_mask] = 1.0

    noise = counts_arr**0.75
    cdf = np.cumsum(noise / noise.sum())
    cdf[-1] = 1.0

    encoded = [
        np.array([index[t] for t in sent if t in index], dtype=np.int64)
        for sent in sentences
    ]
    encoded = [e for e in encoded if e.size > 0]
    if not encoded:
        raise ValueError("no trainable sentences after vocabulary filtering")

    total_positions = sum(e.size for e in encoded)
    total_steps = max(1, total_positions * config.epochs)
    lr0 = config.learning_rate
    lr_min = lr0 * 1e-4

    def lr_at(step: int) -> float:
        return lr0 + (lr_min - lr0) * min(1.0, step / total_steps)

    rng = np.random.default_rng(config.seed)
    syn0 = (rng.random((len(order), config.dim)) - 0.5) / config.dim
    syn1 = np.zeros((len(order), config.dim))

    if workers <= 1:
        step = 0
        for epoch in range(config.epochs):
            step = _train_sentences(
                syn0, syn1, encoded, keep_prob, cdf, config, rng, lr_at, step, epoch
            )
            if epoch_callback is not None:
                epoch_callback(epoch, index, syn0)
    else:
        shards = [encoded[w::workers] for w in range(workers)]
        rngs = [
            np.random.default_rng(s)
            for s in np.random.SeedSequence(config.seed).spawn(workers)
        ]
        for epoch in range(config.epochs):
            lr_epoch = lr_at(epoch * total_positions)
            failures: list[BaseException] = []

            def run(shard, worker_rng, lr=lr_epoch, ep=epoch):
                try:
                    _train_sentences(
                        syn0, syn1, shard, keep_prob, cdf, config, worker_rng,
                        lambda _s, _lr=lr: _lr, 0, ep,
                    )
                except BaseException as exc:  # re-raised on the main thread
                    failures.append(exc)

            threads = [
                threading.Thread(target=run, args=(shard, r))
                for shard, r in zip(shards, rngs)
                if shard
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            if failures:
                raise failures[0]
            if epoch_callback is not None:
                epoch_callback(epoch, index, syn0)

    vectors = {tok: syn0[index[tok]].copy() for tok in order}
    trained = frozenset(
        parse_markup(tok).concept for tok in order if is_markup_token(tok)
    )
    model = EmbeddingModel(
        dim=config.dim, vectors=vectors, config=config, trained_phenotypes=trained
    )
    model.validate()
    return model


def _sidecar_path(path: str | Path) -> str:
    return str(path) + ".meta.json"


def save_model(model: EmbeddingModel, path: str | Path) -> None:
    """Write the plain-text vector table plus the JSON sidecar.

    First line is "vocab_size dim"; each following line is the token and its
    components as full-precision (shortest round-trip) decimal floats.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(model.vectors)} {model.dim}\n")
        for tok, vec in model.vectors.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")
    sidecar = {
        "config": asdict(model.config),
        "trained_phenotypes": sorted(model.trained_phenotypes),
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> EmbeddingModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ModelFormatError(f"{path}: line 1: malformed header")
        try:
            vocab_size, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ModelFormatError(f"{path}: line 1: malformed header") from exc
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            tok = parts[0]
            if len(parts) != dim + 1:
                raise ModelFormatError(
                    f"{path}: line {lineno}: token {tok!r}: expected {dim} "
                    f"components, got {len(parts) - 1}"
                )
            if tok in vectors:
                raise ModelFormatError(f"{path}: line {lineno}: duplicate token {tok!r}")
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ModelFormatError(
                    f"{path}: line {lineno}: token {tok!r}: bad float component"
                ) from exc
            vectors[tok] = vec
    if len(vectors) != vocab_size:
        raise ModelFormatError(
            f"{path}: header promises {vocab_size} tokens, file has {len(vectors)}"
        )
    sidecar = Path(_sidecar_path(path))
    if not sidecar.exists():
        raise ModelFormatError(f"missing model sidecar: {sidecar}")
    with open(sidecar, encoding="utf-8") as fh:
        meta = json.load(fh)
    model = EmbeddingModel(
        dim=dim,
        vectors=vectors,
        config=TrainConfig(**meta["config"]),
        trained_phenotypes=frozenset(meta["trained_phenotypes"]),
    )
    model.validate()
    return model
