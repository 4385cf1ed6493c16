"""Shared test helpers: synthetic binaries, handcrafted vocabularies, models,
and the finite-difference gradient checker."""

import numpy as np

from binsbom.encoder import EncoderConfig, EmbeddingModel, init_model
from binsbom.simtrain import pair_loss_value
from binsbom.tokenizer import SPECIAL_PIECES, WordPieceVocab


def elf_bytes(payload: bytes = b"") -> bytes:
    """Minimal buffer that detect_format classifies as ELF."""
    return b"\x7fELF" + b"\x00" * 12 + payload


def pe_bytes(payload: bytes = b"") -> bytes:
    """Minimal buffer that detect_format classifies as PE: MZ stub, the
    signature-offset dword at 0x3C pointing to 0x40, signature there."""
    header = b"MZ" + b"\x00" * 0x3A + (0x40).to_bytes(4, "little")
    assert len(header) == 0x40
    return header + b"PE\x00\x00" + payload


def make_vocab(extra_pieces, max_len: int = 256) -> WordPieceVocab:
    return WordPieceVocab(pieces=list(SPECIAL_PIECES) + list(extra_pieces), max_len=max_len)


def char_vocab(chars: str, max_len: int = 256) -> WordPieceVocab:
    pieces = sorted(set(chars))
    return make_vocab(pieces + ["##" + c for c in pieces], max_len=max_len)


def make_model(vocab: WordPieceVocab, embed_dim: int = 4, seed: int = 0,
               hidden_dim: int | None = None) -> EmbeddingModel:
    config = EncoderConfig(
        vocab_size=len(vocab), embed_dim=embed_dim, hidden_dim=hidden_dim,
        pad_id=vocab.pad_id, seed=seed,
    )
    return init_model(config)


def finite_diff_pair_grads(model, seq_p, seq_s, label, config, h: float = 1e-4):
    """Central-difference gradients of the pair loss over every parameter."""
    def loss() -> float:
        return pair_loss_value(model, seq_p, seq_s, label, config)

    def diff_array(arr):
        grad = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss()
            arr[idx] = orig - h
            down = loss()
            arr[idx] = orig
            grad[idx] = (up - down) / (2 * h)
        return grad

    grads = {"token_table": diff_array(model.token_table)}
    if model.projection is not None:
        grads["weight"] = diff_array(model.projection[0])
        grads["bias"] = diff_array(model.projection[1])
    return grads


def grad_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom
