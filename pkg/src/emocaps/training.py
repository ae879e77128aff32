"""Training pipeline: cross-entropy loss, Adam, gradient clipping, the
regularizers (Gaussian noise, dropout, spatial dropout), the end-to-end
forward/backward composition, and the epoch loop.

Variable-length tweets are processed one at a time with gradient
accumulation; there is no padding anywhere in the numeric path, so batch
size only controls how many per-example gradients are averaged per update.
All randomness is drawn from streams keyed by (seed, purpose, epoch,
position), which makes runs reproducible independent of worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .capsule import (
    CapsuleCache,
    CapsuleParams,
    capsule_layer,
    capsule_layer_backward,
    init_capsule,
)
from .embeddings import EmbeddingTable, embed, embed_backward
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptySequence,
    LabelOutOfRange,
    NumericError,
    ShapeMismatch,
)
from .evaluation import confusion, metrics
from .nn import (
    N_CLASSES,
    BigruCache,
    DenseParams,
    GruParams,
    bigru_backward,
    bigru_forward,
    dense_backward,
    init_dense,
    init_gru,
    predict_class,
    softmax,
)

PAD_ID = 0  # embedding row pinned to zero; its gradient is discarded


@dataclass
class TrainConfig:
    batch_size: int = 512
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 1.0
    clip_mode: str = "global_norm"  # or "value": clip each entry to +-clip_norm
    spatial_dropout: float = 0.3
    capsule_dropout: float = 0.25
    noise_std: float = 0.1
    second_noise_site: str = "capsule_output"  # or "logits"
    routing_iters: int = 5
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    embed_dim: int = 300
    hidden_dim: int = 128
    num_capsules: int = 16
    capsule_dim: int = 32
    dense_bias: bool = True

    def validate(self) -> None:
        for name in ("spatial_dropout", "capsule_dropout", "beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {value}")
        if self.clip_norm <= 0.0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.clip_mode not in ("global_norm", "value"):
            raise ValueError(f"unknown clip_mode {self.clip_mode!r}")
        if self.second_noise_site not in ("capsule_output", "logits"):
            raise ValueError(f"unknown second_noise_site {self.second_noise_site!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")
        if self.learning_rate <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("learning_rate and epsilon must be positive")
        if self.routing_iters < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("routing_iters/max_epochs must be >= 1, patience >= 0")
        for name in ("embed_dim", "hidden_dim", "num_capsules", "capsule_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class ModelParams:
    embedding: EmbeddingTable
    gru_fwd: GruParams
    gru_bwd: GruParams
    capsule: CapsuleParams
    dense: DenseParams

    def tensors(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every trainable tensor, fixed order."""
        out = {"embedding/W_e": self.embedding.weights}
        for prefix, gru in (("gru_fwd", self.gru_fwd), ("gru_bwd", self.gru_bwd)):
            for name, t in gru.tensors().items():
                out[f"{prefix}/{name}"] = t
        out["capsule/W"] = self.capsule.W
        out["dense/W"] = self.dense.W
        out["dense/b"] = self.dense.b
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "ModelParams":
        def gru(prefix: str) -> GruParams:
            return GruParams(**{f.name: tensors[f"{prefix}/{f.name}"] for f in fields(GruParams)})

        return cls(
            embedding=EmbeddingTable(weights=tensors["embedding/W_e"]),
            gru_fwd=gru("gru_fwd"),
            gru_bwd=gru("gru_bwd"),
            capsule=CapsuleParams(W=tensors["capsule/W"]),
            dense=DenseParams(W=tensors["dense/W"], b=tensors["dense/b"]),
        )


def init_model(cfg: TrainConfig, embedding: EmbeddingTable, dtype=np.float64) -> ModelParams:
    if embedding.dim != cfg.embed_dim:
        raise DimensionMismatch(
            f"embedding table is {embedding.dim}-dimensional, config says {cfg.embed_dim}"
        )
    rng = np.random.default_rng([cfg.seed, 0])
    return ModelParams(
        embedding=embedding,
        gru_fwd=init_gru(cfg.embed_dim, cfg.hidden_dim, rng, dtype),
        gru_bwd=init_gru(cfg.embed_dim, cfg.hidden_dim, rng, dtype),
        capsule=init_capsule(cfg.num_capsules, 2 * cfg.hidden_dim, cfg.capsule_dim, rng, dtype),
        dense=init_dense(cfg.num_capsules * cfg.capsule_dim, rng, dtype),
    )


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam(params: ModelParams) -> AdamState:
    tensors = params.tensors()
    return AdamState(
        m={k: np.zeros_like(t) for k, t in tensors.items()},
        v={k: np.zeros_like(t) for k, t in tensors.items()},
    )


def cross_entropy_loss(f: np.ndarray, gold: int):
    """Negative log-likelihood of the gold class; returns (loss, dL/dlogits)."""
    if not 0 <= gold < N_CLASSES:
        raise LabelOutOfRange(f"gold class {gold} outside 0..{N_CLASSES - 1}")
    loss = -np.log(max(float(f[gold]), 1e-12))
    grad_logits = f.copy()
    grad_logits[gold] -= 1.0
    return float(loss), grad_logits


def clip_gradients(grads: dict, clip_norm: float = 1.0, mode: str = "global_norm") -> dict:
    """Scale all gradients so the global L2 norm is at most clip_norm, or
    clamp each entry to [-clip_norm, clip_norm] in value mode. In place."""
    if mode == "value":
        for t in grads.values():
            np.clip(t, -clip_norm, clip_norm, out=t)
        return grads
    total = 0.0
    for t in grads.values():
        total += float(np.sum(t * t))
    norm = np.sqrt(total)
    if norm > clip_norm:
        scale = clip_norm / norm
        for t in grads.values():
            t *= scale
    return grads


def adam_update(tensors: dict, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    """Standard Adam with bias correction over name-keyed tensors; updates
    tensors and state in place."""
    if set(grads) != set(tensors):
        raise ShapeMismatch("gradient keys do not match parameter keys")
    state.t += 1
    correct1 = 1.0 - cfg.beta1 ** state.t
    correct2 = 1.0 - cfg.beta2 ** state.t
    for name, theta in tensors.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / correct1
        v_hat = v / correct2
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def adam_step(params: ModelParams, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    adam_update(params.tensors(), grads, state, cfg)


def gaussian_noise(x: np.ndarray, std: float, mode: str, rng=None) -> np.ndarray:
    """Additive zero-mean noise in train mode; identity in eval or at std 0."""
    if mode != "train" or std == 0.0:
        return x
    return x + rng.normal(0.0, std, size=x.shape)


def dropout(x: np.ndarray, rate: float, mode: str, rng=None):
    """Unit dropout with inverted scaling; returns (output, mask).

    The mask already carries the 1/(1-rate) survivor scaling, so the backward
    pass is a plain multiply; mask is None when the op was an identity.
    """
    if mode != "train" or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def spatial_dropout(X: np.ndarray, rate: float, mode: str, rng=None):
    """Channel dropout: one keep/drop draw per embedding dimension, applied
    across every timestep; returns (output, broadcastable mask or None)."""
    if mode != "train" or rate == 0.0:
        return X, None
    keep = rng.random((1, X.shape[1])) >= rate
    mask = keep / (1.0 - rate)
    return X * mask, mask


@dataclass
class ForwardCache:
    ids: list
    spatial_mask: np.ndarray | None
    bigru: BigruCache
    capsule: CapsuleCache
    drop_mask: np.ndarray | None
    c: np.ndarray  # dense input, after dropout and noise
    logits: np.ndarray
    probs: np.ndarray


def forward_full(ids, params: ModelParams, cfg: TrainConfig, mode: str, rng=None):
    """Whole pipeline: embed, spatial dropout, noise, bidirectional GRU,
    capsule routing, dropout, noise, dense softmax. Returns (probs, cache).

    The second noise site defaults to the flattened capsule output; the
    alternative adds it to the class logits instead.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(ids) == 0:
        raise EmptySequence("cannot classify an empty token sequence")
    X = embed(ids, params.embedding)
    X, spatial_mask = spatial_dropout(X, cfg.spatial_dropout, mode, rng)
    X = gaussian_noise(X, cfg.noise_std, mode, rng)
    H, bigru_cache = bigru_forward(X, params.gru_fwd, params.gru_bwd)
    flat, caps_cache = capsule_layer(H, params.capsule, cfg.routing_iters)
    c, drop_mask = dropout(flat, cfg.capsule_dropout, mode, rng)
    if cfg.second_noise_site == "capsule_output":
        c = gaussian_noise(c, cfg.noise_std, mode, rng)
    logits = c @ params.dense.W
    if cfg.dense_bias:
        logits = logits + params.dense.b
    if cfg.second_noise_site == "logits":
        logits = gaussian_noise(logits, cfg.noise_std, mode, rng)
    probs = softmax(logits)
    cache = ForwardCache(
        ids=list(ids),
        spatial_mask=spatial_mask,
        bigru=bigru_cache,
        capsule=caps_cache,
        drop_mask=drop_mask,
        c=c,
        logits=logits,
        probs=probs,
    )
    return probs, cache


def backward_full(grad_logits: np.ndarray, cache: ForwardCache, params: ModelParams, cfg: TrainConfig) -> dict:
    """Gradients of every trainable tensor given dL/dlogits; keys match
    ModelParams.tensors(). Additive noise backpropagates as identity."""
    grad_c, gW_dense, gb_dense = dense_backward(grad_logits, cache.c, params.dense, cfg.dense_bias)
    if cache.drop_mask is not None:
        grad_c = grad_c * cache.drop_mask
    grad_H, gW_caps = capsule_layer_backward(grad_c, cache.capsule, params.capsule)
    grad_X, g_fwd, g_bwd = bigru_backward(grad_H, cache.bigru, params.gru_fwd, params.gru_bwd)
    if cache.spatial_mask is not None:
        grad_X = grad_X * cache.spatial_mask
    gW_e = embed_backward(cache.ids, grad_X, params.embedding.weights.shape[0])

    grads = {"embedding/W_e": gW_e}
    for prefix, g in (("gru_fwd", g_fwd), ("gru_bwd", g_bwd)):
        for name, t in g.tensors().items():
            grads[f"{prefix}/{name}"] = t
    grads["capsule/W"] = gW_caps
    grads["dense/W"] = gW_dense
    grads["dense/b"] = gb_dense
    return grads


def example_loss_and_grads(ids, gold: int, params: ModelParams, cfg: TrainConfig, mode: str, rng=None):
    probs, cache = forward_full(ids, params, cfg, mode, rng)
    loss, grad_logits = cross_entropy_loss(probs, gold)
    return loss, backward_full(grad_logits, cache, params, cfg)


def predict_dataset(sequences, params: ModelParams, cfg: TrainConfig) -> list[int]:
    """Eval-mode class prediction for every id sequence, in order."""
    return [predict_class(forward_full(ids, params, cfg, "eval")[0]) for ids in sequences]


def dataset_macro_f1(dataset, params: ModelParams, cfg: TrainConfig) -> float:
    preds = predict_dataset([ids for ids, _ in dataset], params, cfg)
    golds = [gold for _, gold in dataset]
    return metrics(confusion(golds, preds)).macro.f1


def _check_dataset(dataset, name: str) -> None:
    if len(dataset) == 0:
        raise EmptyDataset(f"{name} dataset is empty")
    for ids, gold in dataset:
        if not 0 <= gold < N_CLASSES:
            raise LabelOutOfRange(f"label {gold} outside 0..{N_CLASSES - 1} in {name} dataset")


def train(train_set, dev_set, params: ModelParams, cfg: TrainConfig, clock=None):
    """Epoch loop with early stopping on dev macro-F1.

    Examples are shuffled per epoch from a seeded stream; per-example noise
    and dropout draw from streams keyed by (seed, epoch, position in the
    shuffled order). Updates average per-example gradients over the batch,
    zero the padding row, clip, then apply Adam. Stops once the dev score
    has failed to improve for more than `patience` consecutive epochs, and
    restores the best-scoring parameters before returning.

    `clock` supplies the per-epoch seconds in the history; the default
    reports 0.0 so histories are byte-stable across machines.

    Returns (params, history): one history dict per completed epoch.
    """
    cfg.validate()
    train_set = list(train_set)
    dev_set = list(dev_set)
    _check_dataset(train_set, "train")
    _check_dataset(dev_set, "dev")

    adam = init_adam(params)
    history: list[dict] = []
    best_f1 = -1.0
    best_tensors = None
    since_best = 0

    for epoch in range(cfg.max_epochs):
        started = clock() if clock is not None else 0.0
        order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            sums = {k: np.zeros_like(t) for k, t in params.tensors().items()}
            for offset, index in enumerate(batch):
                rng = np.random.default_rng([cfg.seed, 2, epoch, start + offset])
                ids, gold = train_set[index]
                loss, grads = example_loss_and_grads(ids, gold, params, cfg, "train", rng)
                for k in sums:
                    sums[k] += grads[k]
                losses.append(loss)
            inv = 1.0 / len(batch)
            for k in sums:
                sums[k] *= inv
            sums["embedding/W_e"][PAD_ID, :] = 0.0
            clip_gradients(sums, cfg.clip_norm, cfg.clip_mode)
            adam_step(params, sums, adam, cfg)

        train_loss = float(np.mean(losses))
        if not np.isfinite(train_loss):
            raise NumericError(f"training loss diverged at epoch {epoch}")
        dev_f1 = dataset_macro_f1(dev_set, params, cfg)
        seconds = (clock() - started) if clock is not None else 0.0
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "dev_macro_f1": dev_f1, "seconds": seconds}
        )

        if dev_f1 > best_f1:
            best_f1 = dev_f1
            since_best = 0
            best_tensors = {k: t.copy() for k, t in params.tensors().items()}
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    if best_tensors is not None:
        for name, t in params.tensors().items():
            t[...] = best_tensors[name]
    return params, history
