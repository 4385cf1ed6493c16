"""WordPiece vocabulary training and tokenization.

Training starts from the character alphabet (every seen character as both a
word-start piece and a "##" continuation piece) and greedily merges the
adjacent piece pair with the best likelihood gain count(ab)/(count(a)*count(b))
until the target size is reached or no pair occurs more than once. Ties break
on the lexicographically smallest merged piece, so training is deterministic.

Words are pre-split on whitespace only; version strings lean heavily on
punctuation ("1.2.3", "lib.so"), so no punctuation splitting is applied.
"""

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import EmptyCorpus, IoError, LossySequence
from .util import atomic_write

UNK, CLS, SEP, PAD = "[UNK]", "[CLS]", "[SEP]", "[PAD]"
SPECIAL_PIECES = (UNK, CLS, SEP, PAD)

DEFAULT_MAX_LEN = 256
DEFAULT_TARGET_SIZE = 2_000  # desk-scale default
FULL_SCALE_TARGET_SIZE = 30_000

_CONT = "##"


@dataclass
class WordPieceVocab:
    """Ordered subword pieces plus special-token ids; piece order defines ids."""

    pieces: list[str]
    max_len: int = DEFAULT_MAX_LEN
    target_size: int = DEFAULT_TARGET_SIZE
    ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.ids = {p: i for i, p in enumerate(self.pieces)}
        if len(self.ids) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")
        for special in SPECIAL_PIECES:
            if special not in self.ids:
                raise ValueError(f"special piece {special} missing from vocabulary")

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def unk_id(self) -> int:
        return self.ids[UNK]

    @property
    def cls_id(self) -> int:
        return self.ids[CLS]

    @property
    def sep_id(self) -> int:
        return self.ids[SEP]

    @property
    def pad_id(self) -> int:
        return self.ids[PAD]

    def to_json_dict(self) -> dict:
        return {
            "pieces": self.pieces,
            "specials": {
                "unk": self.unk_id,
                "cls": self.cls_id,
                "sep": self.sep_id,
                "pad": self.pad_id,
            },
            "max_len": self.max_len,
        }

    def save(self, path: str) -> None:
        atomic_write(path, json.dumps(self.to_json_dict(), indent=1))

    @classmethod
    def load(cls, path: str) -> "WordPieceVocab":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read vocabulary {path}: {exc}") from exc
        vocab = cls(pieces=list(raw["pieces"]), max_len=int(raw["max_len"]),
                    target_size=len(raw["pieces"]))
        declared = raw.get("specials", {})
        expected = {"unk": vocab.unk_id, "cls": vocab.cls_id,
                    "sep": vocab.sep_id, "pad": vocab.pad_id}
        if {k: int(v) for k, v in declared.items()} != expected:
            raise ValueError(f"special ids in {path} disagree with piece order")
        return vocab


@dataclass(frozen=True)
class TokenSequence:
    """Parallel piece ids and piece texts; always [CLS]-prefixed, [SEP]-terminated."""

    ids: tuple[int, ...]
    pieces: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


def _word_segments(word: str) -> list[str]:
    return [word[0]] + [_CONT + c for c in word[1:]]


def _merge_text(a: str, b: str) -> str:
    # b is always a continuation piece: strip its marker when gluing.
    return a + b[len(_CONT):]


def _apply_merge(seg: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out = []
    i = 0
    a, b = pair
    while i < len(seg):
        if i + 1 < len(seg) and seg[i] == a and seg[i + 1] == b:
            out.append(merged)
            i += 2
        else:
            out.append(seg[i])
            i += 1
    return out


class _PairStats:
    """Piece/pair occurrence counts over the corpus segmentation, updated
    incrementally as merges rewrite words. `eligible` holds only pairs with
    count >= 2 (the only merge candidates), keeping the argmax scan small."""

    def __init__(self):
        self.piece_count = Counter()
        self.pair_count = Counter()
        self.eligible: dict[tuple[str, str], int] = {}
        self.pair_words: dict[tuple[str, str], set[str]] = {}

    def _bump_pair(self, pair, delta):
        new = self.pair_count[pair] + delta
        if new:
            self.pair_count[pair] = new
        else:
            del self.pair_count[pair]
        if new >= 2:
            self.eligible[pair] = new
        else:
            self.eligible.pop(pair, None)

    def add_word(self, word: str, seg: list[str], freq: int):
        for piece in seg:
            self.piece_count[piece] += freq
        for i in range(len(seg) - 1):
            pair = (seg[i], seg[i + 1])
            self._bump_pair(pair, freq)
            self.pair_words.setdefault(pair, set()).add(word)

    def remove_word(self, word: str, seg: list[str], freq: int):
        for piece in seg:
            self.piece_count[piece] -= freq
            if not self.piece_count[piece]:
                del self.piece_count[piece]
        seen = set()
        for i in range(len(seg) - 1):
            pair = (seg[i], seg[i + 1])
            self._bump_pair(pair, -freq)
            seen.add(pair)
        for pair in seen:
            words = self.pair_words.get(pair)
            if words is not None:
                words.discard(word)
                if not words:
                    del self.pair_words[pair]

    def best_pair(self) -> tuple[tuple[str, str], str] | None:
        best_score = -1.0
        best_text = None
        best = None
        for pair, count in self.eligible.items():
            a, b = pair
            score = count / (self.piece_count[a] * self.piece_count[b])
            text = _merge_text(a, b)
            if score > best_score or (score == best_score and text < best_text):
                best_score, best_text, best = score, text, pair
        if best is None:
            return None
        return best, best_text


def train_vocab(
    texts: list[str],
    target_size: int = DEFAULT_TARGET_SIZE,
    seed: int = 0,
    max_len: int = DEFAULT_MAX_LEN,
) -> WordPieceVocab:
    """Train a WordPiece vocabulary of at most `target_size` pieces.

    Training is fully deterministic; `seed` is accepted for configuration
    plumbing but has no effect on the result.
    """
    del seed
    word_freq = Counter()
    for text in texts:
        word_freq.update(text.split())
    if not word_freq:
        raise EmptyCorpus("no words in training texts")

    alphabet = sorted({c for w in word_freq for c in w})
    pieces = list(SPECIAL_PIECES) + alphabet + [_CONT + c for c in alphabet]
    if target_size <= len(pieces):
        raise ValueError(
            f"target_size {target_size} must exceed alphabet pieces + specials ({len(pieces)})"
        )

    ids = set(pieces)
    segments = {w: _word_segments(w) for w in word_freq}
    stats = _PairStats()
    for word, seg in segments.items():
        stats.add_word(word, seg, word_freq[word])

    while len(pieces) < target_size:
        found = stats.best_pair()
        if found is None:
            break
        pair, merged = found
        for word in sorted(stats.pair_words.get(pair, ())):
            freq = word_freq[word]
            old_seg = segments[word]
            stats.remove_word(word, old_seg, freq)
            new_seg = _apply_merge(old_seg, pair, merged)
            segments[word] = new_seg
            stats.add_word(word, new_seg, freq)
        # Distinct pairs can occasionally glue to the same text; the piece is
        # added once and the extra merge only rewrites segmentations.
        if merged not in ids:
            pieces.append(merged)
            ids.add(merged)

    return WordPieceVocab(pieces=pieces, max_len=max_len, target_size=target_size)


def _greedy_word_pieces(word: str, vocab: WordPieceVocab) -> list[str]:
    out = []
    i = 0
    while i < len(word):
        end = len(word)
        match = None
        while end > i:
            cand = word[i:end] if i == 0 else _CONT + word[i:end]
            if cand in vocab.ids:
                match = cand
                break
            end -= 1
        if match is None:
            # Character outside the training alphabet: single [UNK], move on.
            out.append(UNK)
            i += 1
        else:
            out.append(match)
            i = end
    return out


def tokenize(text: str, vocab: WordPieceVocab) -> TokenSequence:
    """Whitespace-split then greedy longest-match tokenize, wrapped in
    [CLS]...[SEP] and truncated to vocab.max_len with a forced final [SEP]."""
    pieces = [CLS]
    for word in text.split():
        pieces.extend(_greedy_word_pieces(word, vocab))
    pieces.append(SEP)
    if len(pieces) > vocab.max_len:
        pieces = pieces[: vocab.max_len - 1] + [SEP]
    return TokenSequence(
        ids=tuple(vocab.ids[p] for p in pieces),
        pieces=tuple(pieces),
    )


def detokenize(seq: TokenSequence) -> str:
    """Invert tokenize up to whitespace normalization.

    Raises LossySequence when the sequence contains [UNK], since the original
    characters cannot be recovered.
    """
    words: list[str] = []
    for piece in seq.pieces:
        if piece == UNK:
            raise LossySequence("sequence contains [UNK]")
        if piece in (CLS, SEP, PAD):
            continue
        if piece.startswith(_CONT) and words:
            words[-1] += piece[len(_CONT):]
        else:
            words.append(piece[len(_CONT):] if piece.startswith(_CONT) else piece)
    return " ".join(words)
