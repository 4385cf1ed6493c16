"""Token-sequence to fixed-size embedding: the two siamese towers' shared body.

The reference encoder is a trainable token-embedding table followed by mean
pooling over all non-[PAD] pieces (specials included), with an optional square
projection head. Real pretrained sentence encoders plug in through the
line-oriented external-encoder protocol (see ExternalEncoder).
"""

import json
import shlex
import socket
import subprocess
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EndpointUnavailable,
    IoError,
    ProtocolError,
)
from .tokenizer import TokenSequence, WordPieceVocab, tokenize
from .util import atomic_write

DEFAULT_EMBED_DIM = 32
FULL_SCALE_EMBED_DIM = 384
FULL_SCALE_HIDDEN_DIM = 768


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embed_dim: int = DEFAULT_EMBED_DIM
    # When set, enables the square projection head; the reference encoder has
    # no internal transformer width for it to control.
    hidden_dim: int | None = None
    pad_id: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.vocab_size < 5:
            raise ValueError(f"vocab_size must be >= 5, got {self.vocab_size}")


class EmbeddingModel:
    """Trainable parameters: token table plus optional projection (W, b)."""

    def __init__(self, config: EncoderConfig, token_table: np.ndarray,
                 projection: tuple[np.ndarray, np.ndarray] | None = None):
        self.config = config
        self.token_table = token_table
        self.projection = projection

    def copy(self) -> "EmbeddingModel":
        proj = None
        if self.projection is not None:
            proj = (self.projection[0].copy(), self.projection[1].copy())
        return EmbeddingModel(self.config, self.token_table.copy(), proj)

    def to_json_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "token_table": self.token_table.tolist(),
            "projection": None if self.projection is None else {
                "weight": self.projection[0].tolist(),
                "bias": self.projection[1].tolist(),
            },
        }

    def save(self, path: str) -> None:
        atomic_write(path, json.dumps(self.to_json_dict()))

    @classmethod
    def from_json_dict(cls, raw: dict) -> "EmbeddingModel":
        config = EncoderConfig(**raw["config"])
        table = np.asarray(raw["token_table"], dtype=np.float64)
        proj = raw.get("projection")
        projection = None
        if proj is not None:
            projection = (
                np.asarray(proj["weight"], dtype=np.float64),
                np.asarray(proj["bias"], dtype=np.float64),
            )
        arrays = [table] + ([*projection] if projection else [])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("model parameters must all be finite")
        if table.shape != (config.vocab_size, config.embed_dim):
            raise ValueError(
                f"token table shape {table.shape} does not match config "
                f"({config.vocab_size}, {config.embed_dim})"
            )
        return cls(config, table, projection)

    @classmethod
    def load(cls, path: str) -> "EmbeddingModel":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read model {path}: {exc}") from exc
        return cls.from_json_dict(raw)


def init_model(config: EncoderConfig) -> EmbeddingModel:
    """Seeded init: token rows i.i.d. uniform in [-0.05, 0.05], [PAD] row zero.

    The optional projection starts at identity plus the same uniform noise so
    an untrained projected encoder still behaves like the pooled mean.
    """
    rng = np.random.default_rng(config.seed)
    table = rng.uniform(-0.05, 0.05, size=(config.vocab_size, config.embed_dim))
    table[config.pad_id] = 0.0
    projection = None
    if config.hidden_dim is not None:
        weight = np.eye(config.embed_dim) + rng.uniform(
            -0.05, 0.05, size=(config.embed_dim, config.embed_dim)
        )
        bias = np.zeros(config.embed_dim)
        projection = (weight, bias)
    return EmbeddingModel(config, table, projection)


def pooled_ids(model: EmbeddingModel, seq: TokenSequence) -> list[int]:
    """The piece ids that participate in mean pooling (everything but [PAD])."""
    return [i for i in seq.ids if i != model.config.pad_id]


def encode(model: EmbeddingModel, seq: TokenSequence) -> np.ndarray:
    """Mean of the token-table rows of all non-[PAD] pieces, then the optional
    projection. No normalization; cosine similarity removes scale downstream."""
    ids = pooled_ids(model, seq)
    vec = model.token_table[ids].mean(axis=0)
    if model.projection is not None:
        weight, bias = model.projection
        vec = weight @ vec + bias
    return vec


def encode_batch(model: EmbeddingModel, seqs: list[TokenSequence]) -> list[np.ndarray]:
    return [encode(model, seq) for seq in seqs]


def encode_text(model: EmbeddingModel, vocab: WordPieceVocab, text: str) -> np.ndarray:
    return encode(model, tokenize(text, vocab))


class ExternalEncoder:
    """Client for the line-oriented external embedding protocol.

    The endpoint sends a handshake line "EMBED <dim>" on start. Each request
    is one UTF-8 text per line; each response is one line of <dim> decimal
    floats separated by single spaces, in request order.

    Endpoint forms: "tcp:HOST:PORT" connects to a local socket; anything else
    is treated as a command line to spawn with pipes on stdin/stdout.
    """

    def __init__(self, endpoint: str, connect_timeout: float = 10.0):
        self.endpoint = endpoint
        self._proc = None
        self._sock = None
        if endpoint.startswith("tcp:"):
            try:
                _, host, port = endpoint.split(":", 2)
                self._sock = socket.create_connection((host, int(port)), timeout=connect_timeout)
            except (OSError, ValueError) as exc:
                raise EndpointUnavailable(f"cannot connect to {endpoint}: {exc}") from exc
            # Separate reader/writer files: a single "rw" pair can deadlock on
            # interleaved buffered access.
            self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
            self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")
        else:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(endpoint),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise EndpointUnavailable(f"cannot spawn {endpoint!r}: {exc}") from exc
            self._reader = self._proc.stdout
            self._writer = self._proc.stdin
        try:
            self.dim = self._read_handshake()
        except BaseException:
            self.close()
            raise

    def _read_handshake(self) -> int:
        line = self._reader.readline()
        if not line:
            raise EndpointUnavailable(f"endpoint {self.endpoint!r} closed before handshake")
        parts = line.split()
        if len(parts) != 2 or parts[0] != "EMBED" or not parts[1].isdigit():
            raise ProtocolError(f"bad handshake line {line!r}")
        return int(parts[1])

    def encode_texts(self, texts: list[str]) -> list[np.ndarray]:
        for text in texts:
            if "\n" in text or "\r" in text:
                raise ValueError(f"text contains a newline, not sendable: {text!r}")
        try:
            for text in texts:
                self._writer.write(text + "\n")
            self._writer.flush()
        except (OSError, BrokenPipeError) as exc:
            raise EndpointUnavailable(f"endpoint {self.endpoint!r} went away: {exc}") from exc
        vectors = []
        for _ in texts:
            line = self._reader.readline()
            if not line:
                raise ProtocolError(f"endpoint {self.endpoint!r} closed mid-response")
            try:
                values = [float(tok) for tok in line.split()]
            except ValueError as exc:
                raise ProtocolError(f"non-numeric response line {line!r}") from exc
            if len(values) != self.dim:
                raise DimensionMismatch(
                    f"endpoint declared dim {self.dim} but sent {len(values)} values"
                )
            vec = np.asarray(values, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise ProtocolError(f"non-finite values in response line {line!r}")
            vectors.append(vec)
        return vectors

    def close(self) -> None:
        if self._sock is not None:
            self._reader.close()
            self._writer.close()
            self._sock.close()
            self._sock = None
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=10)
            self._proc = None

    def __enter__(self) -> "ExternalEncoder":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def external_encode(
    endpoint: str, texts: list[str], expected_dim: int | None = None
) -> list[np.ndarray]:
    """One-shot convenience wrapper: connect, handshake, encode, close."""
    with ExternalEncoder(endpoint) as enc:
        if expected_dim is not None and enc.dim != expected_dim:
            raise DimensionMismatch(
                f"expected embedding dim {expected_dim}, endpoint speaks {enc.dim}"
            )
        return enc.encode_texts(texts)
