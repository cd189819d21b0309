"""SGD training with gradient clipping, dropout and validation early stopping."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .corpus import LabelScheme, Sentence
from .embeddings import CharVocab, TokenVocab
from .features import FeatureConfig
from .model import Dimensions, TaggerNetwork

logger = logging.getLogger(__name__)

MAGIC = b"IOCNERCK"
FORMAT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch, sentence, loss):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, sentence {sentence}")
        self.epoch = epoch
        self.sentence = sentence


class CheckpointError(ValueError):
    """Checkpoint is truncated, corrupted or otherwise unreadable."""


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    clip_norm: float = 5.0
    dropout_p: float = 0.5
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    token_dim: int = 100
    char_dim: int = 25
    char_hidden: int = 25
    hidden: int = 100
    attention: int = 100
    ffn_hidden: int = 100
    init_scale: float = 1.0
    forget_bias: float = 1.0
    use_features: bool = True

    def __post_init__(self):
        for f in ("learning_rate", "clip_norm", "max_epochs", "patience", "token_dim",
                  "char_dim", "char_hidden", "hidden", "attention", "ffn_hidden", "init_scale"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")

    @property
    def dimensions(self) -> Dimensions:
        return Dimensions(self.token_dim, self.char_dim, self.char_hidden, self.hidden,
                          self.attention, self.ffn_hidden)

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        """Read ``key = value`` lines ('#' comments); ``overrides`` win over the file."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (x.strip() for x in line.split("=", 1))
                if key not in types:
                    raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
                values[key] = _coerce(types[key], value)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _coerce(type_name, value):
    type_name = str(type_name)
    if type_name == "bool":
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if type_name == "int":
        return int(value)
    return float(value)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    seconds: float
    best: bool


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self):
        return len(self.epochs)

    @property
    def losses(self):
        return [r.train_loss for r in self.epochs]

    @property
    def val_f1(self):
        return [r.val_f1 for r in self.epochs]

    @property
    def best_epoch(self):
        best = [r.epoch for r in self.epochs if r.best]
        return best[-1] if best else None

    def to_tsv(self) -> str:
        rows = ["epoch\tloss\tval_f1\tseconds\tbest"]
        rows += [f"{r.epoch}\t{r.train_loss:.6f}\t{r.val_f1:.6f}\t{r.seconds:.2f}\t{int(r.best)}"
                 for r in self.epochs]
        return "\n".join(rows) + "\n"


def clip_gradients(store, max_norm=5.0) -> float:
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``.

    Returns the factor applied (1.0 when no clipping was needed).
    """
    norm = store.grad_norm()
    if not np.isfinite(norm):
        raise FloatingPointError(f"non-finite gradient norm {norm}")
    if norm > max_norm:
        factor = max_norm / norm
        store.scale_grads(factor)
        return factor
    return 1.0


def build_network(train_set, config: TrainConfig, scheme: LabelScheme,
                  feature_config: FeatureConfig | None = None, pretrained=None) -> TaggerNetwork:
    """Vocabularies from ``pretrained`` (vocab, table) plus training tokens, then a fresh network."""
    texts = [s.tokens for s in train_set]
    if pretrained is not None:
        vocab, table = pretrained
        token_vocab = TokenVocab(vocab.items())
    else:
        token_vocab, table = TokenVocab(), None
    for sent in texts:
        for tok in sent:
            token_vocab.add(tok.surface)
    char_vocab = CharVocab.build(texts)
    return TaggerNetwork(config.dimensions, token_vocab, char_vocab, scheme, feature_config,
                         use_features=config.use_features, token_table=table, seed=config.seed,
                         init_scale=config.init_scale, forget_bias=config.forget_bias)


def evaluate_f1(net: TaggerNetwork, encoded, sentences) -> float:
    from .evaluation import entity_prf

    preds = [net.decode(enc) for enc in encoded]
    return entity_prf(sentences, preds, net.scheme).micro.f1


def train(train_set, val_set, config: TrainConfig | None = None, pretrained=None,
          scheme: LabelScheme | None = None, feature_config: FeatureConfig | None = None,
          network: TaggerNetwork | None = None, callback=None):
    """Train a tagger by per-sentence SGD and return ``(network, history)``.

    The returned network holds the parameters of the epoch with the highest
    validation micro F1. Training stops after ``patience`` epochs without a
    strict improvement or at ``max_epochs``.
    """
    config = config or TrainConfig()
    train_set = list(train_set)
    val_set = list(val_set) if val_set is not None else []
    if not train_set:
        raise ValueError("training set is empty")
    if any(s.gold_labels is None for s in train_set + val_set):
        raise ValueError("training and validation sentences need gold labels")
    if not val_set:
        val_set = train_set
    if network is None:
        from .corpus import DEFAULT_SCHEME
        network = build_network(train_set, config, scheme or DEFAULT_SCHEME, feature_config,
                                pretrained)
    elif scheme is not None and scheme != network.scheme:
        raise ValueError("label scheme of the data does not match the network")

    store = network.store
    rng = np.random.default_rng([config.seed, 1])
    train_enc = [network.encode(s.tokens) for s in train_set]
    val_enc = [network.encode(s.tokens) for s in val_set]

    history = TrainHistory()
    best_f1 = -1.0
    best_state = None
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train_set))
        total = 0.0
        for idx in order:
            store.zero_grad()
            loss = network.loss_and_grads(train_enc[idx], train_set[idx].gold_labels,
                                          training=True, rng=rng, dropout_p=config.dropout_p)
            if not np.isfinite(loss):
                raise NonFiniteLossError(epoch, int(idx), loss)
            store.apply_frozen()
            clip_gradients(store, config.clip_norm)
            store.sgd_step(config.learning_rate)
            total += loss
        f1 = evaluate_f1(network, val_enc, val_set)
        improved = f1 > best_f1
        if improved:
            best_f1 = f1
            best_state = store.state_dict()
            since_best = 0
        else:
            since_best += 1
        record = EpochRecord(epoch, total / len(train_set), f1, time.perf_counter() - start,
                             improved)
        history.epochs.append(record)
        logger.info("epoch %d loss %.4f val-F1 %.4f%s", epoch, record.train_loss, f1,
                    " *" if improved else "")
        if callback is not None:
            callback(record)
        if since_best >= config.patience:
            history.stopped_early = epoch < config.max_epochs
            break
    store.load_state_dict(best_state)
    return network, history


# ---------------------------------------------------------- checkpoints


def save_model(network: TaggerNetwork, path, config: TrainConfig | None = None) -> None:
    """Write a versioned binary checkpoint with a trailing SHA-256 checksum."""
    meta = {
        "labels": network.scheme.labels,
        "entity_types": list(zip(network.scheme.entity_types, network.scheme.codes)),
        "dimensions": asdict(network.dims),
        "use_features": network.use_features,
        "token_vocab": network.token_vocab.items(),
        "char_vocab": network.char_vocab.items(),
        "tlds": sorted(network.feature_config.tld_set),
        "malware_prefixes": list(network.feature_config.malware_prefixes),
        "malware_delimiters": sorted(network.feature_config.malware_delimiters),
        "config": asdict(config) if config is not None else None,
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    meta_bytes = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    buf.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    params = network.store.params
    buf.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<HB", len(nb), arr.ndim))
        buf.write(nb)
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = buf.getvalue()
    Path(path).write_bytes(payload + hashlib.sha256(payload).digest())


def load_model(path):
    """Read a checkpoint written by ``save_model``; returns ``(network, config)``."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 8 + 32 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a tagger checkpoint or truncated")
    payload, digest = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (file corrupted or truncated)")
    version, meta_len = struct.unpack_from("<II", payload, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}")
    try:
        pos = len(MAGIC) + 8
        meta = json.loads(payload[pos:pos + meta_len].decode("utf-8"))
        pos += meta_len
        (count,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            name_len, ndim = struct.unpack_from("<HB", payload, pos)
            pos += 3
            name = payload[pos:pos + name_len].decode("utf-8")
            pos += name_len
            shape = struct.unpack_from(f"<{ndim}Q", payload, pos)
            pos += 8 * ndim
            size = int(np.prod(shape)) * 8
            tensors[name] = np.frombuffer(payload[pos:pos + size], dtype="<f8").reshape(shape)
            pos += size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint: {exc}") from None

    scheme = LabelScheme([tuple(x) for x in meta["entity_types"]])
    if scheme.labels != meta["labels"]:
        raise CheckpointError(f"{path}: label scheme inconsistent with its entity types")
    feature_config = FeatureConfig(frozenset(meta["tlds"]), tuple(meta["malware_prefixes"]),
                                   frozenset(meta["malware_delimiters"]))
    net = TaggerNetwork(Dimensions(**meta["dimensions"]), TokenVocab(meta["token_vocab"]),
                        CharVocab(meta["char_vocab"]), scheme, feature_config,
                        use_features=meta["use_features"])
    if set(tensors) != set(net.store.params):
        raise CheckpointError(f"{path}: tensor set does not match the architecture")
    for name, arr in tensors.items():
        if arr.shape != net.store.params[name].shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {arr.shape}")
        net.store.params[name][...] = arr
    config = TrainConfig(**meta["config"]) if meta["config"] else None
    return net, config
