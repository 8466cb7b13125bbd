"""Feature encoding: token embeddings plus standardized scalar signals.

Three token streams feed one fixed-width vector per package:

* the registry description (text tokens),
* static call sites, and
* dynamic trace events,

where each call/event contributes its catalog name, its category, and a
bucketed argument count.  Static and dynamic streams share one embedding
model since they draw from the same function vocabulary; descriptions get
their own.  Embeddings are trained in-process with skip-gram negative
sampling over float32 numpy, single-threaded and fully seeded, so a rerun
with the same inputs is bitwise identical.

Vector layout (see FeatureLayout): three mean-pooled embedding segments,
three raw 0/1 presence flags, then eleven scalars standardized with
training-split statistics.  A modality that is absent or excluded by the
mode contributes zeroed segments, a zero flag, and zeroed scalar slots, so
"missing" is encoded explicitly rather than imputed.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .catalog import Category
from .dynamic_trace import DynamicProfile
from .errors import MissingModel
from .profiles import FgiProfile
from .static_analysis import StaticProfile

UNK_TOKEN = "⟨UNK⟩"  # ⟨UNK⟩

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_MATRIX_MAGIC = b"FGIE"
_MATRIX_HEADER = struct.Struct("<4sII")

SCALAR_NAMES = (
    "description_length",
    "author_maintainer_count",
    "dependency_count",
    "has_url",
    "has_git_url",
    "static_network_calls",
    "static_file_calls",
    "static_process_calls",
    "dynamic_network_events",
    "dynamic_file_events",
    "dynamic_process_events",
)

_METADATA_SCALARS = slice(0, 5)
_STATIC_SCALARS = slice(5, 8)
_DYNAMIC_SCALARS = slice(8, 11)


class FeatureMode(str, Enum):
    METADATA = "metadata"
    STATIC = "static"
    DYNAMIC = "dynamic"
    ALL = "all"

    @property
    def wants_metadata(self) -> bool:
        return self in (FeatureMode.METADATA, FeatureMode.ALL)

    @property
    def wants_static(self) -> bool:
        return self in (FeatureMode.STATIC, FeatureMode.ALL)

    @property
    def wants_dynamic(self) -> bool:
        return self in (FeatureMode.DYNAMIC, FeatureMode.ALL)


# ---------------------------------------------------------------------------
# tokenization
# ---------------------------------------------------------------------------

def tokenize_text(text: str) -> list[str]:
    """Lowercased alphanumeric runs; underscores and punctuation split."""
    return _TOKEN_RE.findall(text.lower())


def _argc_token(count: int) -> str:
    return f"argc:{count}" if count < 3 else "argc:3+"


def _count_call_arguments(arguments: str) -> int:
    """Top-level comma count over a raw trace argument string."""
    text = arguments.strip()
    if not text:
        return 0
    depth = 0
    quote = ""
    count = 1
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = ""
        elif ch in "\"'":
            quote = ch
        elif ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth = max(0, depth - 1)
        elif ch == "," and depth == 0:
            count += 1
        i += 1
    return count


def function_tokens_static(profile: StaticProfile) -> list[str]:
    """name / category / arity tokens per call site, in document order."""
    tokens: list[str] = []
    for site in profile.call_sites:
        tokens.append(site.function_name)
        tokens.append(site.category.value)
        tokens.append(_argc_token(site.argument_count))
    return tokens


def function_tokens_dynamic(profile: DynamicProfile) -> list[str]:
    tokens: list[str] = []
    for event in profile.events:
        tokens.append(event.function_name)
        tokens.append(event.category.value)
        tokens.append(_argc_token(_count_call_arguments(event.arguments)))
    return tokens


# ---------------------------------------------------------------------------
# vocabulary and embedding model
# ---------------------------------------------------------------------------

@dataclass
class Vocabulary:
    """Token ids with ⟨UNK⟩ fixed at id 0; order is count desc, token asc."""

    tokens: list[str]
    counts: list[int]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNK_TOKEN:
            raise ValueError("vocabulary must start with the UNK token")
        self._index = {token: i for i, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._index.get(token, 0)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]],
              min_count: int = 1) -> "Vocabulary":
        tally: dict[str, int] = {}
        for sentence in sentences:
            for token in sentence:
                tally[token] = tally.get(token, 0) + 1
        kept = sorted(
            ((token, count) for token, count in tally.items()
             if count >= min_count and token != UNK_TOKEN),
            key=lambda item: (-item[1], item[0]),
        )
        unk_count = sum(
            count for token, count in tally.items()
            if count < min_count or token == UNK_TOKEN
        )
        return cls(
            tokens=[UNK_TOKEN] + [token for token, _ in kept],
            counts=[unk_count] + [count for _, count in kept],
        )


@dataclass(frozen=True)
class FeatureConfig:
    """Embedding and encoding knobs; defaults favor quality over speed."""

    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_count: int = 1
    seed: int = 0
    embeddings_only: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**{k: d[k] for k in asdict(cls()).keys() if k in d})


@dataclass
class EmbeddingModel:
    vocab: Vocabulary
    matrix: np.ndarray  # (len(vocab), dimension) float32

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.id_of(token)]


def _sigmoid32(x: np.ndarray) -> np.ndarray:
    clipped = np.clip(x, np.float32(-8.0), np.float32(8.0))
    return np.float32(1.0) / (np.float32(1.0) + np.exp(-clipped))


def train_embedding(
    sentences: Sequence[Sequence[str]],
    config: FeatureConfig,
    seed: int | None = None,
) -> EmbeddingModel:
    """Skip-gram with negative sampling, float32, deterministic per seed.

    Negatives are drawn from the unigram distribution raised to 0.75.
    The learning rate decays linearly with progress to 1e-4 of its start.
    The UNK row stays all-zero when no training token mapped to it, so
    unseen tokens contribute nothing at pooling time.
    """
    vocab = Vocabulary.build(sentences, min_count=config.min_count)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    size = len(vocab)
    dim = config.dimension

    syn0 = ((rng.random((size, dim)) - 0.5) / dim).astype(np.float32)
    syn1 = np.zeros((size, dim), dtype=np.float32)
    if vocab.counts[0] == 0:
        syn0[0] = 0.0

    ids = [
        np.array([vocab.id_of(t) for t in sentence], dtype=np.int64)
        for sentence in sentences if len(sentence) > 0
    ]
    counts = np.array(vocab.counts, dtype=np.float64)
    weights = counts ** 0.75
    total_weight = weights.sum()
    if total_weight == 0.0 or not ids:
        return EmbeddingModel(vocab=vocab, matrix=syn0)
    cumulative = np.cumsum(weights / total_weight)
    cumulative[-1] = 1.0  # guard against rounding when sampling

    total_words = sum(len(s) for s in ids) * config.epochs
    alpha0 = np.float32(config.learning_rate)
    min_alpha = np.float32(config.learning_rate * 1e-4)
    negatives = config.negatives
    processed = 0

    for _epoch in range(config.epochs):
        for sentence in ids:
            length = len(sentence)
            spans = rng.integers(1, config.window + 1, size=length)
            for pos in range(length):
                alpha = max(
                    min_alpha,
                    alpha0 * np.float32(1.0 - processed / total_words),
                )
                processed += 1
                center = int(sentence[pos])
                lo = max(0, pos - int(spans[pos]))
                hi = min(length, pos + int(spans[pos]) + 1)
                center_vec = syn0[center]
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    context = int(sentence[ctx_pos])
                    draws = rng.random(negatives)
                    neg_ids = np.searchsorted(cumulative, draws)
                    targets = np.empty(negatives + 1, dtype=np.int64)
                    targets[0] = context
                    targets[1:] = neg_ids
                    labels = np.zeros(negatives + 1, dtype=np.float32)
                    labels[0] = 1.0
                    mask = np.ones(negatives + 1, dtype=np.float32)
                    mask[1:][neg_ids == context] = 0.0

                    out = syn1[targets]  # copy via fancy indexing
                    scores = out @ center_vec
                    grad = (labels - _sigmoid32(scores)) * alpha * mask
                    feedback = grad @ out
                    update = grad[:, None] * center_vec[None, :]
                    if len(set(targets.tolist())) == targets.size:
                        syn1[targets] += update
                    else:
                        np.add.at(syn1, targets, update)
                    syn0[center] += feedback
    return EmbeddingModel(vocab=vocab, matrix=syn0)


def embed_tokens(model: EmbeddingModel, tokens: Sequence[str]) -> np.ndarray:
    """Mean-pooled float32 vector; all-zero for an empty token list."""
    if not tokens:
        return np.zeros(model.dimension, dtype=np.float32)
    rows = np.array([model.vocab.id_of(t) for t in tokens], dtype=np.int64)
    return model.matrix[rows].mean(axis=0, dtype=np.float32)


# ---------------------------------------------------------------------------
# the package-level feature vector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureLayout:
    """Shape contract between encoder and classifier artifacts."""

    dimension: int
    embeddings_only: bool
    mode: str

    def segments(self) -> list[tuple[str, int]]:
        parts = [
            ("metadata_embedding", self.dimension),
            ("static_embedding", self.dimension),
            ("dynamic_embedding", self.dimension),
            ("presence", 3),
        ]
        if not self.embeddings_only:
            parts.append(("scalars", len(SCALAR_NAMES)))
        return parts

    @property
    def total_length(self) -> int:
        return sum(length for _, length in self.segments())

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "embeddings_only": self.embeddings_only,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureLayout":
        return cls(
            dimension=d["dimension"],
            embeddings_only=bool(d["embeddings_only"]),
            mode=d["mode"],
        )


@dataclass
class FeatureVector:
    values: np.ndarray  # float64, len == layout.total_length
    layout: FeatureLayout


@dataclass
class ModelBundle:
    """Everything needed to turn a profile into a vector, fitted on the
    training split only (standardization statistics must not see test data)."""

    text_model: EmbeddingModel
    function_model: EmbeddingModel
    scalar_means: np.ndarray  # float64 (len(SCALAR_NAMES),)
    scalar_stds: np.ndarray
    config: FeatureConfig

    @property
    def dimension(self) -> int:
        return self.text_model.dimension


def extract_scalars(profile: FgiProfile) -> np.ndarray:
    """Raw scalar signals in SCALAR_NAMES order; absent modality -> zeros."""
    row = np.zeros(len(SCALAR_NAMES), dtype=np.float64)
    mf = profile.metadata_features
    if mf is not None:
        row[0] = mf.description_length
        row[1] = mf.author_maintainer_count
        row[2] = mf.dependency_count
        row[3] = 1.0 if mf.has_url else 0.0
        row[4] = 1.0 if mf.has_git_url else 0.0
    if profile.static is not None:
        counts = profile.static.per_category_counts
        row[5] = counts[Category.NETWORK]
        row[6] = counts[Category.FILE]
        row[7] = counts[Category.PROCESS]
    if profile.dynamic is not None:
        counts = profile.dynamic.per_category_counts
        row[8] = counts[Category.NETWORK]
        row[9] = counts[Category.FILE]
        row[10] = counts[Category.PROCESS]
    return row


def _description_tokens(profile: FgiProfile) -> list[str]:
    if profile.metadata is None:
        return []
    return tokenize_text(profile.metadata.description or "")


def fit_bundle(
    train_profiles: Sequence[FgiProfile],
    config: FeatureConfig | None = None,
) -> ModelBundle:
    """Train both embedding models and freeze scalar statistics.

    The two models use distinct derived seeds so their sampling streams
    are independent while the whole fit stays reproducible.
    """
    config = config or FeatureConfig()
    text_sentences = [
        tokens for tokens in (_description_tokens(p) for p in train_profiles)
        if tokens
    ]
    function_sentences: list[list[str]] = []
    for profile in train_profiles:
        if profile.static is not None:
            tokens = function_tokens_static(profile.static)
            if tokens:
                function_sentences.append(tokens)
        if profile.dynamic is not None:
            tokens = function_tokens_dynamic(profile.dynamic)
            if tokens:
                function_sentences.append(tokens)

    text_model = train_embedding(text_sentences, config, seed=config.seed)
    function_model = train_embedding(
        function_sentences, config, seed=config.seed + 1
    )

    raw = np.array(
        [extract_scalars(p) for p in train_profiles], dtype=np.float64
    )
    if raw.size == 0:
        means = np.zeros(len(SCALAR_NAMES), dtype=np.float64)
        stds = np.ones(len(SCALAR_NAMES), dtype=np.float64)
    else:
        means = raw.mean(axis=0)
        stds = raw.std(axis=0, ddof=0)
    return ModelBundle(
        text_model=text_model,
        function_model=function_model,
        scalar_means=means,
        scalar_stds=stds,
        config=config,
    )


def featurize(
    profile: FgiProfile,
    bundle: ModelBundle,
    mode: FeatureMode = FeatureMode.ALL,
) -> FeatureVector:
    """Encode one profile; the vector length depends only on the bundle."""
    dim = bundle.dimension
    meta_seg = np.zeros(dim, dtype=np.float32)
    static_seg = np.zeros(dim, dtype=np.float32)
    dynamic_seg = np.zeros(dim, dtype=np.float32)
    flags = np.zeros(3, dtype=np.float64)
    included = np.zeros(len(SCALAR_NAMES), dtype=bool)

    if mode.wants_metadata and profile.metadata_features is not None:
        tokens = _description_tokens(profile)
        meta_seg = embed_tokens(bundle.text_model, tokens)
        flags[0] = 1.0
        included[_METADATA_SCALARS] = True
    if mode.wants_static and profile.static is not None:
        static_seg = embed_tokens(
            bundle.function_model, function_tokens_static(profile.static)
        )
        flags[1] = 1.0
        included[_STATIC_SCALARS] = True
    if mode.wants_dynamic and profile.dynamic is not None:
        dynamic_seg = embed_tokens(
            bundle.function_model, function_tokens_dynamic(profile.dynamic)
        )
        flags[2] = 1.0
        included[_DYNAMIC_SCALARS] = True

    parts = [
        meta_seg.astype(np.float64),
        static_seg.astype(np.float64),
        dynamic_seg.astype(np.float64),
        flags,
    ]
    if not bundle.config.embeddings_only:
        raw = extract_scalars(profile)
        with np.errstate(invalid="ignore", divide="ignore"):
            standardized = np.where(
                bundle.scalar_stds > 0,
                (raw - bundle.scalar_means) / bundle.scalar_stds,
                0.0,
            )
        standardized[~included] = 0.0
        parts.append(standardized)

    layout = FeatureLayout(
        dimension=dim,
        embeddings_only=bundle.config.embeddings_only,
        mode=mode.value,
    )
    return FeatureVector(values=np.concatenate(parts), layout=layout)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_embedding(model: EmbeddingModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vocab.txt").write_text(
        "".join(f"{token}\n" for token in model.vocab.tokens), encoding="utf-8"
    )
    (directory / "counts.txt").write_text(
        "".join(f"{count}\n" for count in model.vocab.counts), encoding="utf-8"
    )
    header = _MATRIX_HEADER.pack(
        _MATRIX_MAGIC, model.matrix.shape[0], model.matrix.shape[1]
    )
    (directory / "matrix.bin").write_bytes(
        header + np.ascontiguousarray(model.matrix, dtype="<f4").tobytes()
    )


def load_embedding(directory: str | Path) -> EmbeddingModel:
    directory = Path(directory)
    vocab_path = directory / "vocab.txt"
    matrix_path = directory / "matrix.bin"
    if not vocab_path.is_file() or not matrix_path.is_file():
        raise MissingModel(f"no embedding model under {directory}")
    tokens = vocab_path.read_text(encoding="utf-8").splitlines()
    counts_path = directory / "counts.txt"
    if counts_path.is_file():
        counts = [int(line) for line in
                  counts_path.read_text(encoding="utf-8").splitlines()]
    else:
        counts = [0] * len(tokens)
    blob = matrix_path.read_bytes()
    if len(blob) < _MATRIX_HEADER.size:
        raise MissingModel(f"truncated matrix file in {directory}")
    magic, rows, cols = _MATRIX_HEADER.unpack_from(blob)
    if magic != _MATRIX_MAGIC:
        raise MissingModel(f"bad matrix magic in {directory}")
    expected = _MATRIX_HEADER.size + rows * cols * 4
    if len(blob) != expected or rows != len(tokens):
        raise MissingModel(f"matrix size mismatch in {directory}")
    matrix = np.frombuffer(
        blob, dtype="<f4", offset=_MATRIX_HEADER.size
    ).reshape(rows, cols).copy()
    return EmbeddingModel(
        vocab=Vocabulary(tokens=tokens, counts=counts), matrix=matrix
    )


def save_bundle(bundle: ModelBundle, directory: str | Path) -> None:
    """Bundle directory: two embedding models, scalars.csv, bundle.json."""
    from .analytics import write_csv  # local import to keep modules light

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_embedding(bundle.text_model, directory / "text_model")
    save_embedding(bundle.function_model, directory / "function_model")
    write_csv(
        directory / "scalars.csv",
        ("name", "mean", "std"),
        [
            (name, float(bundle.scalar_means[i]), float(bundle.scalar_stds[i]))
            for i, name in enumerate(SCALAR_NAMES)
        ],
    )
    (directory / "bundle.json").write_text(
        json.dumps(bundle.config.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_bundle(directory: str | Path) -> ModelBundle:
    import csv as _csv

    directory = Path(directory)
    config_path = directory / "bundle.json"
    scalars_path = directory / "scalars.csv"
    if not config_path.is_file() or not scalars_path.is_file():
        raise MissingModel(f"no model bundle under {directory}")
    config = FeatureConfig.from_dict(
        json.loads(config_path.read_text(encoding="utf-8"))
    )
    means = np.zeros(len(SCALAR_NAMES), dtype=np.float64)
    stds = np.ones(len(SCALAR_NAMES), dtype=np.float64)
    with open(scalars_path, encoding="utf-8", newline="") as fh:
        reader = _csv.DictReader(fh)
        rows = {row["name"]: row for row in reader}
    for i, name in enumerate(SCALAR_NAMES):
        if name not in rows:
            raise MissingModel(f"scalars.csv lacks a row for {name}")
        means[i] = float(rows[name]["mean"])
        stds[i] = float(rows[name]["std"])
    return ModelBundle(
        text_model=load_embedding(directory / "text_model"),
        function_model=load_embedding(directory / "function_model"),
        scalar_means=means,
        scalar_stds=stds,
        config=config,
    )
