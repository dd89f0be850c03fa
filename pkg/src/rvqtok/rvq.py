"""Residual vector quantization with EMA codebook learning.

A stack of codebooks quantizes a vector layer by layer: the first layer
quantizes the input, each later layer quantizes the running residual,
and the reconstruction is the sum of the selected codewords. Codewords
are learned without gradients, by an exponential-moving-average update
over the vectors assigned to each entry, optionally followed by an
L2-norm contraction of the whole book.

Two EMA modes are provided. ``paper_literal`` adds the full assignment
mean on top of the decayed codeword:

    c  <-  (1 - beta) * (alpha * c_prev + mean(assigned))

``standard_ema`` weights the mean by (1 - alpha), the conventional
convex form:

    c  <-  (1 - beta) * (alpha * c_prev + (1 - alpha) * mean(assigned))

Entries with no assignments decay: c <- (1 - beta) * alpha * c_prev.
Note that in paper_literal mode the fixed point of a constantly
assigned entry is (1-beta)*m / (1 - (1-beta)*alpha), which for alpha
near 1 sits far beyond the assignment mean m; the norm contraction
(beta > 0) and the assignment dynamics are what keep books bounded.

Training-time stochasticity: Gumbel-softmax codeword selection (sampled
proportional to softmax(-d^2 / tau)), per-sample layerwise dropout of
layers >= 2, dead-entry restart from the current batch, and an
instance-level schedule that ramps the fraction of samples routed
through the quantizer.

Gradient flow is out of scope: consumers that need backpropagation
should treat quantization as identity for gradients (straight-through
convention). Nothing here builds an autodiff graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyInput, InvalidConfig, IndexOutOfRange, ShapeMismatch
from .mel import FeatureSequence
from .seeding import derive_seed, make_rng

# Codebook sizes decrease with depth under the default profile.
DEFAULT_LAYER_SIZES = (8192, 4096, 2048, 1024, 1024, 1024, 1024, 1024)

INACTIVE = -1  # sentinel index for layers deactivated by dropout

EMA_MODES = ("paper_literal", "standard_ema")


@dataclass(eq=False)
class Codebook:
    """One quantizer layer: K codewords plus EMA bookkeeping.

    usage_counts[j] is the number of update steps since entry j was
    last assigned; cluster_size_ema[j] is a smoothed assignment count.
    """

    vectors: np.ndarray
    ema_decay: float = 0.99
    norm_beta: float = 0.0
    usage_counts: np.ndarray | None = None
    cluster_size_ema: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ShapeMismatch(f"codebook must be K x D, got {self.vectors.shape}")
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise InvalidConfig("codewords must be finite")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise InvalidConfig(f"ema_decay must be in [0, 1], got {self.ema_decay}")
        if not 0.0 <= self.norm_beta < 1.0:
            raise InvalidConfig(f"norm_beta must be in [0, 1), got {self.norm_beta}")
        if self.usage_counts is None:
            self.usage_counts = np.zeros(self.size, dtype=np.int64)
        else:
            self.usage_counts = np.asarray(self.usage_counts, dtype=np.int64)
        if self.cluster_size_ema is None:
            self.cluster_size_ema = np.zeros(self.size, dtype=np.float64)
        else:
            self.cluster_size_ema = np.asarray(self.cluster_size_ema, dtype=np.float64)
        if self.usage_counts.shape != (self.size,) or (self.usage_counts < 0).any():
            raise InvalidConfig("usage_counts must be K non-negative integers")
        if self.cluster_size_ema.shape != (self.size,):
            raise ShapeMismatch("cluster_size_ema must have K entries")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "Codebook":
        return Codebook(
            vectors=self.vectors.copy(),
            ema_decay=self.ema_decay,
            norm_beta=self.norm_beta,
            usage_counts=self.usage_counts.copy(),
            cluster_size_ema=self.cluster_size_ema.copy(),
        )


@dataclass(eq=False)
class RvqStack:
    """Ordered codebook layers sharing one vector dimension."""

    layers: list[Codebook]

    def __post_init__(self):
        if not self.layers:
            raise InvalidConfig("stack needs at least one layer")
        dims = {book.dim for book in self.layers}
        if len(dims) != 1:
            raise ShapeMismatch(f"layers disagree on dimension: {sorted(dims)}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dim(self) -> int:
        return self.layers[0].dim

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(book.size for book in self.layers)

    def copy(self) -> "RvqStack":
        return RvqStack([book.copy() for book in self.layers])


@dataclass(frozen=True)
class QuantizeResult:
    """Outcome of quantizing one vector.

    indices holds one codeword index per layer (INACTIVE for layers
    dropped by dropout); quantized is the sum of the selected codewords
    of active layers; residuals[l] is the running residual after layer
    l (unchanged across inactive layers).
    """

    indices: tuple[int, ...]
    quantized: np.ndarray
    residuals: tuple[np.ndarray, ...]
    active_layers: tuple[int, ...]


@dataclass(frozen=True)
class GumbelConfig:
    """Stochastic codeword selection: sample proportional to softmax(-d^2/tau)."""

    temperature: float = 1.0
    enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.enabled and self.temperature <= 0:
            raise InvalidConfig("gumbel temperature must be positive when enabled")


GUMBEL_OFF = GumbelConfig(enabled=False)


@dataclass(frozen=True)
class DropoutConfig:
    """Layerwise dropout. The first layer is never dropped.

    mode "independent": each layer >= 2 survives a sample with
    keep_prob_per_layer independently. mode "suffix": layers are walked
    in order and the first failure drops that layer and everything
    after it.
    """

    keep_prob_per_layer: float = 0.5
    seed: int = 0
    mode: str = "independent"

    def __post_init__(self):
        if not 0.0 <= self.keep_prob_per_layer <= 1.0:
            raise InvalidConfig("keep_prob_per_layer must be in [0, 1]")
        if self.mode not in ("independent", "suffix"):
            raise InvalidConfig(f"unknown dropout mode {self.mode!r}")


@dataclass(frozen=True)
class TrainingSchedule:
    """Progressive replacement ramp plus per-stage commit-loss weights.

    The fraction of instances routed through the quantizer rises
    linearly from replace_start to replace_end over total_steps.
    Replacement is instance-level: a whole sample is routed or not,
    never individual tokens.
    """

    replace_start: float = 0.10
    replace_end: float = 1.00
    total_steps: int = 1000
    commit_weight_schedule: tuple[float, ...] = (0.25,)
    granularity: str = "instance"

    def __post_init__(self):
        if not 0.0 <= self.replace_start <= self.replace_end <= 1.0:
            raise InvalidConfig(
                f"need 0 <= replace_start <= replace_end <= 1, got "
                f"{self.replace_start}, {self.replace_end}"
            )
        if self.total_steps < 0:
            raise InvalidConfig("total_steps must be >= 0")
        if self.granularity != "instance":
            raise InvalidConfig("replacement granularity must be instance-level")
        if not self.commit_weight_schedule:
            raise InvalidConfig("commit_weight_schedule must be non-empty")

    def replace_fraction_at(self, step: int) -> float:
        if not 0 <= step <= self.total_steps:
            raise InvalidConfig(f"step {step} outside [0, {self.total_steps}]")
        if self.total_steps == 0:
            return self.replace_end
        t = step / self.total_steps
        return self.replace_start + (self.replace_end - self.replace_start) * t

    def commit_weight_at(self, step: int) -> float:
        stages = len(self.commit_weight_schedule)
        if self.total_steps == 0:
            return self.commit_weight_schedule[-1]
        i = min(step * stages // self.total_steps, stages - 1)
        return self.commit_weight_schedule[i]


def pairwise_sqdist(x: np.ndarray, codewords: np.ndarray) -> np.ndarray:
    """Squared euclidean distances, shape (T, K) for (T, D) x (K, D)."""
    d = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ codewords.T)
        + np.sum(codewords * codewords, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _select_indices(
    dists: np.ndarray, gumbel: GumbelConfig, rng: np.random.Generator | None
) -> np.ndarray:
    if not gumbel.enabled:
        return np.argmin(dists, axis=1)
    logits = -dists / gumbel.temperature
    noise = rng.gumbel(size=dists.shape)
    return np.argmax(logits + noise, axis=1)


def _active_mask(
    n: int, n_layers: int, dropout: DropoutConfig | None, rng: np.random.Generator | None
) -> np.ndarray:
    active = np.ones((n, n_layers), dtype=bool)
    if dropout is None or n_layers == 1:
        return active
    draws = rng.random((n, n_layers - 1))
    keep = draws < dropout.keep_prob_per_layer
    if dropout.mode == "independent":
        active[:, 1:] = keep
    else:  # suffix: first failure drops that layer and all deeper ones
        active[:, 1:] = np.cumprod(keep, axis=1).astype(bool)
    return active


def _cascade(
    stack: RvqStack,
    x: np.ndarray,
    gumbel: GumbelConfig,
    dropout: DropoutConfig | None,
    gumbel_rng: np.random.Generator | None,
    dropout_rng: np.random.Generator | None,
    collect_layer_inputs: bool = False,
):
    """Run the residual cascade over a (T, D) batch.

    Returns (indices, active, quantized, layer_inputs) where indices is
    (T, L) with INACTIVE sentinels, quantized is (T, D), and
    layer_inputs (when collected) lists each layer's (T, D) residual
    input.
    """
    n, dim = x.shape
    if dim != stack.dim:
        raise ShapeMismatch(f"input dim {dim} != stack dim {stack.dim}")
    for book in stack.layers:
        if book.size == 0:
            raise InvalidConfig("cannot quantize with an empty codebook")

    active = _active_mask(n, stack.n_layers, dropout, dropout_rng)
    indices = np.full((n, stack.n_layers), INACTIVE, dtype=np.int64)
    residual = x.astype(np.float64, copy=True)
    layer_inputs: list[np.ndarray] | None = [] if collect_layer_inputs else None

    for layer, book in enumerate(stack.layers):
        if collect_layer_inputs:
            layer_inputs.append(residual.copy())
        rows = np.flatnonzero(active[:, layer])
        if rows.size == 0:
            continue
        dists = pairwise_sqdist(residual[rows], book.vectors)
        chosen = _select_indices(dists, gumbel, gumbel_rng)
        indices[rows, layer] = chosen
        residual[rows] -= book.vectors[chosen]

    quantized = x - residual
    return indices, active, quantized, layer_inputs


def quantize(
    stack: RvqStack,
    input_vec: np.ndarray,
    gumbel: GumbelConfig = GUMBEL_OFF,
    dropout: DropoutConfig | None = None,
    *,
    gumbel_rng: np.random.Generator | None = None,
    dropout_rng: np.random.Generator | None = None,
) -> QuantizeResult:
    """Quantize one vector through the residual cascade.

    Selection is argmin squared distance, or Gumbel-softmax sampling
    when enabled. Dropout (if given) may deactivate layers >= 2 for
    this sample; inactive layers record the INACTIVE sentinel and do
    not contribute to the reconstruction. RNGs default to fresh
    generators seeded from the configs, so a bare call is deterministic.
    """
    x = np.asarray(input_vec, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch(f"expected a single vector, got shape {x.shape}")
    if gumbel.enabled and gumbel_rng is None:
        gumbel_rng = np.random.Generator(np.random.PCG64(gumbel.seed))
    if dropout is not None and dropout_rng is None:
        dropout_rng = np.random.Generator(np.random.PCG64(dropout.seed))

    indices, active, quantized, _ = _cascade(
        stack, x[None, :], gumbel, dropout, gumbel_rng, dropout_rng
    )

    residuals = []
    running = x.copy()
    for layer, book in enumerate(stack.layers):
        idx = indices[0, layer]
        if idx != INACTIVE:
            running = running - book.vectors[idx]
        residuals.append(running.copy())

    return QuantizeResult(
        indices=tuple(int(i) for i in indices[0]),
        quantized=quantized[0],
        residuals=tuple(residuals),
        active_layers=tuple(int(l) for l in np.flatnonzero(active[0])),
    )


def quantize_batch(
    stack: RvqStack,
    vectors: np.ndarray,
    gumbel: GumbelConfig = GUMBEL_OFF,
    dropout: DropoutConfig | None = None,
    *,
    gumbel_rng: np.random.Generator | None = None,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized cascade over a (T, D) batch.

    Returns (indices, quantized): indices is (T, L) with INACTIVE
    sentinels, quantized is (T, D).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected a T x D batch, got shape {x.shape}")
    if gumbel.enabled and gumbel_rng is None:
        gumbel_rng = np.random.Generator(np.random.PCG64(gumbel.seed))
    if dropout is not None and dropout_rng is None:
        dropout_rng = np.random.Generator(np.random.PCG64(dropout.seed))
    indices, _, quantized, _ = _cascade(stack, x, gumbel, dropout, gumbel_rng, dropout_rng)
    return indices, quantized


def commitment_loss(input_vec: np.ndarray, result: QuantizeResult) -> float:
    """Squared L2 distance between the input and its quantization."""
    x = np.asarray(input_vec, dtype=np.float64)
    if x.shape != result.quantized.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {result.quantized.shape}")
    diff = x - result.quantized
    return float(np.sum(diff * diff))


def mean_commitment_loss(vectors: np.ndarray, quantized: np.ndarray) -> float:
    """Batch commitment loss: mean over vectors of the squared L2 residual."""
    x = np.asarray(vectors, dtype=np.float64)
    q = np.asarray(quantized, dtype=np.float64)
    if x.shape != q.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {q.shape}")
    diff = x - q
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _ema_from_sums(
    book: Codebook, sums: np.ndarray, counts: np.ndarray, mode: str
) -> Codebook:
    if mode not in EMA_MODES:
        raise InvalidConfig(f"unknown EMA mode {mode!r}")
    alpha, beta = book.ema_decay, book.norm_beta
    new_vectors = alpha * book.vectors
    assigned = counts > 0
    if assigned.any():
        means = sums[assigned] / counts[assigned, None]
        if mode == "paper_literal":
            new_vectors[assigned] += means
        else:
            new_vectors[assigned] += (1.0 - alpha) * means
    new_vectors *= 1.0 - beta

    usage = book.usage_counts + 1
    usage[assigned] = 0
    cluster = alpha * book.cluster_size_ema + (1.0 - alpha) * counts
    return Codebook(
        vectors=new_vectors,
        ema_decay=alpha,
        norm_beta=beta,
        usage_counts=usage,
        cluster_size_ema=cluster,
    )


def ema_update(book: Codebook, assignments, mode: str = "paper_literal") -> Codebook:
    """One EMA step from an {entry index: [assigned vectors]} map.

    Per-entry means are reduced in the order the vectors appear
    (ascending sample index by convention), so results do not depend on
    thread count. Returns a new Codebook; the input is untouched.
    usage_counts reset for assigned entries and increment otherwise.
    """
    sums = np.zeros_like(book.vectors)
    counts = np.zeros(book.size, dtype=np.int64)
    for j in sorted(assignments):
        vecs = assignments[j]
        if len(vecs) == 0:
            continue
        if not 0 <= j < book.size:
            raise IndexOutOfRange(f"entry {j} outside codebook of size {book.size}")
        for v in vecs:
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (book.dim,):
                raise ShapeMismatch(f"assigned vector has shape {v.shape}, want ({book.dim},)")
            sums[j] += v
        counts[j] = len(vecs)
    return _ema_from_sums(book, sums, counts, mode)


def apply_norm_constraint(book: Codebook) -> Codebook:
    """Scale every codeword by (1 - norm_beta); counters unchanged."""
    return replace(
        book,
        vectors=book.vectors * (1.0 - book.norm_beta),
        usage_counts=book.usage_counts.copy(),
        cluster_size_ema=book.cluster_size_ema.copy(),
    )


def restart_dead_entries(
    book: Codebook,
    batch: np.ndarray,
    dead_threshold: int,
    rng_seed: int,
) -> tuple[Codebook, list[int]]:
    """Replace entries unused for >= dead_threshold steps with batch vectors.

    Each dead entry is overwritten by a uniformly sampled batch vector
    (sampling with replacement across entries) and its counters reset.
    Live entries are untouched. Returns (new book, replaced indices).
    """
    dead = np.flatnonzero(book.usage_counts >= dead_threshold)
    if dead.size == 0:
        return book, []
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise EmptyInput("dead entries present but the batch is empty")
    if batch.shape[1] != book.dim:
        raise ShapeMismatch(f"batch dim {batch.shape[1]} != codebook dim {book.dim}")

    rng = np.random.Generator(np.random.PCG64(rng_seed))
    picks = rng.integers(0, batch.shape[0], size=dead.size)
    vectors = book.vectors.copy()
    vectors[dead] = batch[picks]
    usage = book.usage_counts.copy()
    usage[dead] = 0
    cluster = book.cluster_size_ema.copy()
    cluster[dead] = 0.0
    new_book = Codebook(
        vectors=vectors,
        ema_decay=book.ema_decay,
        norm_beta=book.norm_beta,
        usage_counts=usage,
        cluster_size_ema=cluster,
    )
    return new_book, [int(j) for j in dead]


def total_loss(
    recon_loss: float,
    llm_loss: float,
    commit_loss_value: float,
    weight_recon: float,
    weight_llm: float,
    weight_commit: float,
) -> float:
    """Weighted sum of the three training terms.

    The language-model alignment loss is an externally supplied scalar
    (default 0 upstream); this function only combines.
    """
    weights = (weight_recon, weight_llm, weight_commit)
    for w in weights:
        if not np.isfinite(w) or w < 0:
            raise InvalidConfig(f"loss weights must be finite and >= 0, got {weights}")
    return (
        weight_recon * recon_loss
        + weight_llm * llm_loss
        + weight_commit * commit_loss_value
    )


def vq_replacement_gate(
    schedule: TrainingSchedule, step: int, rng_seed: int, n_instances: int
) -> np.ndarray:
    """Instance-level replacement mask at the schedule's current fraction.

    Each instance (a whole sample, never a single token) is marked
    independently with probability p = the linear ramp value at step.
    """
    p = schedule.replace_fraction_at(step)
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    return rng.random(n_instances) < p


def _kmeanspp_pick(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(0, x.shape[0]))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            chosen.append(int(rng.integers(0, x.shape[0])))
            continue
        probs = d2 / total
        nxt = int(rng.choice(x.shape[0], p=probs))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[np.asarray(chosen)]


def init_rvq_stack(
    layer_sizes,
    features: np.ndarray,
    *,
    ema_decay: float = 0.99,
    norm_beta: float = 0.0,
    seed: int = 0,
    method: str = "sample",
) -> RvqStack:
    """Initialize a stack from a batch of feature vectors.

    Layer l's codewords are drawn from the residuals left after
    quantizing the batch through layers < l, either sampled uniformly
    (default) or by k-means++ seeding.
    """
    if method not in ("sample", "kmeans++"):
        raise InvalidConfig(f"unknown init method {method!r}")
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyInput("initialization needs a non-empty T x D batch")

    rng = make_rng(seed, "init")
    residual = x.copy()
    layers = []
    for layer, k in enumerate(layer_sizes):
        if k <= 0:
            raise InvalidConfig(f"layer {layer} size must be positive, got {k}")
        if method == "kmeans++":
            vectors = _kmeanspp_pick(residual, k, rng)
        else:
            replace_draw = residual.shape[0] < k
            picks = rng.choice(residual.shape[0], size=k, replace=replace_draw)
            vectors = residual[picks]
        book = Codebook(
            vectors=vectors.copy(), ema_decay=ema_decay, norm_beta=norm_beta
        )
        layers.append(book)
        nearest = np.argmin(pairwise_sqdist(residual, book.vectors), axis=1)
        residual = residual - book.vectors[nearest]
    return RvqStack(layers)


def encode_frames(stack: RvqStack, vectors: np.ndarray) -> np.ndarray:
    """Deterministic inference path: argmin cascade, no Gumbel, no dropout."""
    indices, _ = quantize_batch(stack, vectors)
    return indices.astype(np.int64)


def decode_frames(stack: RvqStack, indices: np.ndarray) -> np.ndarray:
    """Sum each frame's selected codewords; shape (T, L) -> (T, D)."""
    idx = np.asarray(indices)
    if idx.ndim != 2 or idx.shape[1] != stack.n_layers:
        raise ShapeMismatch(
            f"indices must be T x {stack.n_layers}, got {idx.shape}"
        )
    out = np.zeros((idx.shape[0], stack.dim))
    for layer, book in enumerate(stack.layers):
        col = idx[:, layer]
        if (col < 0).any() or (col >= book.size).any():
            raise IndexOutOfRange(
                f"layer {layer} has indices outside [0, {book.size})"
            )
        out += book.vectors[col]
    return out


@dataclass(frozen=True)
class StepRecord:
    step: int
    commit_loss: float
    feature_mae: float
    utilization: tuple[float, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "commit_loss": self.commit_loss,
                "feature_mae": self.feature_mae,
                "utilization": list(self.utilization),
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class TrainingReport:
    steps: tuple[StepRecord, ...] = ()

    def to_jsonl(self) -> str:
        return "".join(rec.to_json() + "\n" for rec in self.steps)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainingReport":
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                StepRecord(
                    step=obj["step"],
                    commit_loss=obj["commit_loss"],
                    feature_mae=obj["feature_mae"],
                    utilization=tuple(obj["utilization"]),
                )
            )
        return cls(steps=tuple(records))


def train_rvq(
    stack: RvqStack,
    corpus: list[FeatureSequence],
    schedule: TrainingSchedule,
    gumbel: GumbelConfig = GUMBEL_OFF,
    dropout: DropoutConfig | None = None,
    epochs: int = 1,
    *,
    mode: str = "paper_literal",
    dead_threshold: int = 256,
    restart: bool = True,
    seed: int = 0,
) -> tuple[RvqStack, TrainingReport]:
    """Train the stack over the corpus; returns (new stack, report).

    One step processes one FeatureSequence: its vectors are quantized
    (Gumbel and dropout per configs), per-layer assignments are
    accumulated from each layer's residual inputs, every layer takes an
    EMA update, and dead entries restart from the layer's current
    batch. The replacement schedule gates whole steps at instance
    granularity: a sequence not routed through VQ this step is still
    quantized for reporting, but contributes no codebook update.

    Deterministic given (seed, corpus order, configs); the input stack
    is not modified.
    """
    if epochs < 0:
        raise InvalidConfig("epochs must be >= 0")
    if len(corpus) == 0:
        raise EmptyInput("training corpus is empty")
    for seq in corpus:
        if seq.dim != stack.dim:
            raise ShapeMismatch(f"corpus dim {seq.dim} != stack dim {stack.dim}")
    if epochs == 0:
        return stack, TrainingReport()

    work = stack.copy()
    gumbel_rng = make_rng(seed, "gumbel") if gumbel.enabled else None
    dropout_rng = make_rng(seed, "dropout") if dropout is not None else None

    records = []
    step = 0
    for _epoch in range(epochs):
        for seq in corpus:
            x = seq.vectors
            routed = bool(
                vq_replacement_gate(
                    schedule,
                    min(step, schedule.total_steps),
                    derive_seed(seed, f"gate:{step}"),
                    1,
                )[0]
            )
            indices, active, quantized, layer_inputs = _cascade(
                work, x, gumbel, dropout, gumbel_rng, dropout_rng, True
            )

            commit = mean_commitment_loss(x, quantized)
            fmae = float(np.mean(np.abs(x - quantized)))
            utilization = []
            for layer, book in enumerate(work.layers):
                used = indices[active[:, layer], layer]
                utilization.append(float(np.unique(used).size / book.size))

            if routed:
                for layer in range(work.n_layers):
                    book = work.layers[layer]
                    rows = np.flatnonzero(active[:, layer])
                    sums = np.zeros_like(book.vectors)
                    counts = np.zeros(book.size, dtype=np.int64)
                    if rows.size:
                        chosen = indices[rows, layer]
                        np.add.at(sums, chosen, layer_inputs[layer][rows])
                        np.add.at(counts, chosen, 1)
                    book = _ema_from_sums(book, sums, counts, mode)
                    if restart and rows.size:
                        book, _ = restart_dead_entries(
                            book,
                            layer_inputs[layer][rows],
                            dead_threshold,
                            derive_seed(seed, f"restart:{step}:{layer}"),
                        )
                    work.layers[layer] = book

            records.append(
                StepRecord(
                    step=step,
                    commit_loss=commit,
                    feature_mae=fmae,
                    utilization=tuple(utilization),
                )
            )
            step += 1

    return work, TrainingReport(steps=tuple(records))
