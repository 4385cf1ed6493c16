"""Labeled corpus construction: ingest scanned packages into records, generate
correlated/decorrelated training pairs, build random and zero-shot splits,
persist JSONL, and synthesize desk-scale test corpora.
"""

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from . import binscan
from .errors import (
    InsufficientClasses,
    InsufficientProducts,
    IoError,
    MalformedLine,
    MetadataMismatch,
)
from .util import atomic_write, derive_seeds


def normalize_product(name: str) -> str:
    """Canonical product label: trimmed and lowercased."""
    return name.strip().lower()


@dataclass(frozen=True)
class VersionStringRecord:
    """One extracted candidate string with its package-metadata ground truth."""

    product: str
    package: str
    version: str
    version_string: str

    def __post_init__(self):
        if not self.product:
            raise ValueError("product must be non-empty")
        if self.product != normalize_product(self.product):
            raise ValueError(f"product {self.product!r} is not lowercase-normalized")
        if self.version not in self.package:
            raise ValueError(
                f"version {self.version!r} is not a substring of package {self.package!r}"
            )


@dataclass(frozen=True)
class LabeledPair:
    """(product, version string) with label 1 = correlated, 0 = decorrelated."""

    product: str
    version_string: str
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


class SplitMode(Enum):
    RANDOM = "random"
    ZERO_SHOT = "zero-shot"


@dataclass
class SplitSpec:
    mode: SplitMode
    train_fraction: float = 0.8
    k_classes: int = 20
    n_per_class: int = 4_000
    seed: int = 0

    def __post_init__(self):
        self.mode = SplitMode(self.mode)
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.k_classes < 1 or self.n_per_class < 1:
            raise ValueError("k_classes and n_per_class must be positive")


def ingest_package(
    files: list[tuple[str, bytes]],
    product: str,
    package: str,
    version: str,
    min_len: int = binscan.DEFAULT_MIN_LEN,
    pattern: str = binscan.DEFAULT_VERSION_PATTERN,
) -> list[VersionStringRecord]:
    """Scan a package's files and emit one record per distinct candidate string.

    The package version is the ground-truth label and must appear in the
    package name; duplicate (product, version_string) pairs collapse to one.
    """
    if version not in package:
        raise MetadataMismatch(
            f"version {version!r} does not appear in package {package!r}"
        )
    product = normalize_product(product)
    records = []
    seen = set()
    for path, data in files:
        report = binscan.scan_bytes(data, path=path, min_len=min_len, pattern=pattern)
        for candidate in report.candidates:
            key = (product, candidate.text)
            if key in seen:
                continue
            seen.add(key)
            records.append(VersionStringRecord(
                product=product, package=package, version=version,
                version_string=candidate.text,
            ))
    return records


def make_pairs(
    records: list[VersionStringRecord],
    negatives_per_positive: int = 1,
    seed: int = 0,
) -> list[LabeledPair]:
    """One positive pair per record plus seeded decorrelated negatives.

    Negative products are drawn uniformly without replacement from the other
    products (capped at however many exist). Output order is: each record's
    positive followed by its negatives, records in input order.
    """
    if negatives_per_positive < 0:
        raise ValueError("negatives_per_positive must be >= 0")
    products = sorted({r.product for r in records})
    if negatives_per_positive > 0 and len(products) < 2:
        raise InsufficientProducts(
            "negative pairs need at least 2 distinct products, "
            f"got {len(products)}"
        )
    rng = np.random.default_rng(seed)
    others_by_product = {
        p: [q for q in products if q != p] for p in products
    }
    pairs = []
    for record in records:
        pairs.append(LabeledPair(record.product, record.version_string, 1))
        others = others_by_product[record.product]
        k = min(negatives_per_positive, len(others))
        if k:
            for idx in rng.choice(len(others), size=k, replace=False):
                pairs.append(LabeledPair(others[idx], record.version_string, 0))
    return pairs


def split_random(pairs: list[LabeledPair], spec: SplitSpec):
    """Seeded uniform shuffle, then prefix split at floor(train_fraction * N)."""
    if spec.mode is not SplitMode.RANDOM:
        raise ValueError(f"split_random requires RANDOM mode, got {spec.mode}")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(pairs))
    cut = math.floor(spec.train_fraction * len(pairs))
    shuffled = [pairs[i] for i in order]
    return shuffled[:cut], shuffled[cut:]


def split_zero_shot(
    records: list[VersionStringRecord],
    spec: SplitSpec,
    negatives_per_positive: int = 1,
    seed: int = 0,
):
    """Class-disjoint split: sample up to n_per_class records from each of the
    k_classes largest products for the train side; every record of the
    remaining products goes to the test side. Pairs are generated per side,
    negatives drawn only within the side, so train and test product sets are
    disjoint for both labels.

    Record sampling is driven by spec.seed; pair generation by `seed`.
    """
    if spec.mode is not SplitMode.ZERO_SHOT:
        raise ValueError(f"split_zero_shot requires ZERO_SHOT mode, got {spec.mode}")
    by_product: dict[str, list[VersionStringRecord]] = defaultdict(list)
    for record in records:
        by_product[record.product].append(record)
    if len(by_product) <= spec.k_classes:
        raise InsufficientClasses(
            f"need more than {spec.k_classes} distinct products, got {len(by_product)}"
        )
    # Largest classes first; ties broken by name so the split is reproducible.
    ranked = sorted(by_product, key=lambda p: (-len(by_product[p]), p))
    top = ranked[: spec.k_classes]

    rng = np.random.default_rng(spec.seed)
    train_records = []
    for product in top:
        group = by_product[product]
        take = min(spec.n_per_class, len(group))
        chosen = sorted(rng.choice(len(group), size=take, replace=False))
        train_records.extend(group[i] for i in chosen)
    test_products = set(ranked[spec.k_classes:])
    test_records = [r for r in records if r.product in test_products]

    train_seed, test_seed = derive_seeds(seed, 2)
    train_pairs = make_pairs(train_records, negatives_per_positive, train_seed)
    test_pairs = make_pairs(test_records, negatives_per_positive, test_seed)
    return train_pairs, test_pairs


_RECORD_KEYS = {"product", "package", "version", "version_string"}
_PAIR_KEYS = {"product", "version_string", "label"}


def save_jsonl(items, path: str) -> None:
    """Write records or pairs as JSONL, one object per line, atomically."""
    lines = [json.dumps(asdict(item), sort_keys=True, ensure_ascii=False) for item in items]
    atomic_write(path, "".join(line + "\n" for line in lines))


def load_jsonl(path: str):
    """Read records or pairs back; the object shape is sniffed per line.

    Raises MalformedLine (with the 1-based line number) on unparseable lines,
    unknown shapes, or invariant violations.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    items = []
    for line_no, line in enumerate(raw_lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, f"expected an object, got {type(obj).__name__}")
        try:
            if set(obj) == _RECORD_KEYS:
                items.append(VersionStringRecord(**obj))
            elif set(obj) == _PAIR_KEYS:
                items.append(LabeledPair(**obj))
            else:
                raise MalformedLine(
                    line_no, f"unrecognized keys {sorted(obj)}"
                )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, MalformedLine):
                raise
            raise MalformedLine(line_no, str(exc)) from exc
    return items


def load_records_jsonl(path: str) -> list[VersionStringRecord]:
    items = load_jsonl(path)
    bad = next((i for i in items if not isinstance(i, VersionStringRecord)), None)
    if bad is not None:
        raise ValueError(f"{path} contains non-record lines")
    return items


def load_pairs_jsonl(path: str) -> list[LabeledPair]:
    items = load_jsonl(path)
    bad = next((i for i in items if not isinstance(i, LabeledPair)), None)
    if bad is not None:
        raise ValueError(f"{path} contains non-pair lines")
    return items


_CONSONANTS = "bdfglmnprstvz"
_VOWELS = "aeiou"

_TEMPLATES = (
    lambda stem, ver, maj, minor: f"{stem} {ver}",
    lambda stem, ver, maj, minor: f"{stem} version {ver}",
    lambda stem, ver, maj, minor: f"{stem}/{ver}",
    lambda stem, ver, maj, minor: f"lib{stem}.so.{maj}.{minor}",
    lambda stem, ver, maj, minor: f"{stem}: version {maj}.{minor}",
    lambda stem, ver, maj, minor: f"{stem} v{ver}",
)


def _make_stems(n: int, rng: np.random.Generator) -> list[str]:
    stems: list[str] = []
    while len(stems) < n:
        syllables = rng.integers(3, 5)
        stem = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        )
        # Substring collisions between stems would blur the product labels.
        if any(stem in s or s in stem for s in stems):
            continue
        stems.append(stem)
    return stems


def synth_corpus(
    n_products: int,
    samples_per_product: int,
    seed: int = 0,
) -> list[VersionStringRecord]:
    """Deterministic synthetic corpus: each product gets distinct name stems and
    version strings that embed the stem plus a dotted version, all of which
    match the default version pattern."""
    if n_products < 2:
        raise ValueError(f"n_products must be >= 2, got {n_products}")
    if samples_per_product < 1:
        raise ValueError("samples_per_product must be >= 1")
    rng = np.random.default_rng(seed)
    stems = _make_stems(n_products, rng)
    records = []
    for stem in stems:
        for _ in range(samples_per_product):
            maj = int(rng.integers(1, 30))
            minor = int(rng.integers(0, 50))
            patch = int(rng.integers(0, 100))
            version = f"{maj}.{minor}.{patch}"
            template = _TEMPLATES[rng.integers(len(_TEMPLATES))]
            records.append(VersionStringRecord(
                product=stem,
                package=f"{stem}-{version}",
                version=version,
                version_string=template(stem, version, maj, minor),
            ))
    return records
