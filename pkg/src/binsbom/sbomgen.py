"""Turn scan reports plus a trained encoder into product matches and a reduced
SBOM document, with local CVE lookup and a whitelisting verdict.

Components carry only what vulnerability lookup needs: product, extracted
version, evidence strings, and the best match probability. Component
relationships are deliberately not recorded.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .binscan import ScanReport, extract_version
from .encoder import EmbeddingModel, ExternalEncoder, encode
from .errors import (
    DuplicateProduct,
    EmptyProductList,
    FeedParseError,
    IoError,
    ZeroVector,
)
from .simtrain import Similarity, cosine_sim, dot_sim, pair_probability
from .tokenizer import WordPieceVocab, tokenize
from .util import atomic_write, canonical_json, sha256_hex

TOOL_NAME = "binsbom"

CVE_ID_RE = re.compile(r"CVE-\d{4}-\d{4,}")


class ModelEmbedder:
    """Embeds texts with a local model + vocabulary pair."""

    def __init__(self, model: EmbeddingModel, vocab: WordPieceVocab):
        self.model = model
        self.vocab = vocab

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        return [encode(self.model, tokenize(t, self.vocab)) for t in texts]

    def fingerprint(self) -> str:
        payload = canonical_json(self.model.to_json_dict()) + canonical_json(
            self.vocab.to_json_dict()
        )
        return sha256_hex(payload.encode("utf-8"))


class ExternalEmbedder:
    """Embeds texts through an external encoder endpoint."""

    def __init__(self, endpoint: str):
        self.endpoint = endpoint
        self._encoder = ExternalEncoder(endpoint)
        self.dim = self._encoder.dim

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        return self._encoder.encode_texts(texts)

    def fingerprint(self) -> str:
        return sha256_hex(f"external:{self.endpoint}:EMBED {self.dim}".encode("utf-8"))

    def close(self) -> None:
        self._encoder.close()

    def __enter__(self) -> "ExternalEmbedder":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


@dataclass
class ProductIndex:
    """Every known product name encoded once, plus the encoder fingerprint."""

    products: list[str]
    vectors: np.ndarray
    fingerprint: str

    def __post_init__(self):
        if not self.products:
            raise EmptyProductList("index needs at least one product")
        if len(set(self.products)) != len(self.products):
            raise DuplicateProduct("index product names must be unique")
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape[0] != len(self.products):
            raise ValueError("one vector per product required")

    def save(self, path: str) -> None:
        atomic_write(path, json.dumps({
            "products": self.products,
            "vectors": self.vectors.tolist(),
            "fingerprint": self.fingerprint,
        }))

    @classmethod
    def load(cls, path: str) -> "ProductIndex":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read index {path}: {exc}") from exc
        return cls(
            products=list(raw["products"]),
            vectors=np.asarray(raw["vectors"], dtype=np.float64),
            fingerprint=str(raw["fingerprint"]),
        )


@dataclass(frozen=True)
class MatchResult:
    version_string: str
    product: str | None
    probability: float
    accepted: bool

    def to_json_dict(self) -> dict:
        return {
            "version_string": self.version_string,
            "product": self.product,
            "probability": self.probability,
            "accepted": self.accepted,
        }


def build_product_index(embedder, products: list[str]) -> ProductIndex:
    """Encode every product name once and freeze the vectors in an index."""
    if not products:
        raise EmptyProductList("no products given")
    if len(set(products)) != len(products):
        raise DuplicateProduct("duplicate product names")
    vectors = np.stack(embedder.embed_texts(list(products)))
    return ProductIndex(
        products=list(products), vectors=vectors, fingerprint=embedder.fingerprint()
    )


def match_vector(
    index: ProductIndex,
    query: np.ndarray,
    version_string: str,
    similarity: Similarity = Similarity.COSINE,
    threshold: float = 0.5,
    prob_epsilon: float = 1e-6,
) -> MatchResult:
    """Score a query embedding against every index entry; argmax wins, ties
    break on product name ascending. Zero-vector queries are unmatched."""
    sim = cosine_sim if similarity is Similarity.COSINE else dot_sim
    best_product = None
    best_score = None
    for product, vector in zip(index.products, index.vectors):
        try:
            score = sim(query, vector)
        except ZeroVector:
            continue
        if (
            best_score is None
            or score > best_score
            or (score == best_score and product < best_product)
        ):
            best_score, best_product = score, product
    if best_product is None:
        return MatchResult(version_string, None, 0.0, False)
    probability = pair_probability(best_score, similarity, prob_epsilon)
    return MatchResult(version_string, best_product, probability, probability >= threshold)


def match_string(
    index: ProductIndex,
    version_string: str,
    embedder,
    similarity: Similarity = Similarity.COSINE,
    threshold: float = 0.5,
    prob_epsilon: float = 1e-6,
) -> MatchResult:
    query = embedder.embed_texts([version_string])[0]
    return match_vector(index, query, version_string, similarity, threshold, prob_epsilon)


@dataclass
class SbomComponent:
    product: str
    version: str
    evidence: list[str]
    max_probability: float
    cves: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "product": self.product,
            "version": self.version,
            "evidence": list(self.evidence),
            "max_probability": self.max_probability,
            "cves": list(self.cves),
        }


@dataclass
class SbomDocument:
    tool: dict
    files: list[str]
    components: list[SbomComponent]
    residual: list[str]
    whitelist_ok: bool = True

    def to_json_dict(self) -> dict:
        return {
            "tool": dict(self.tool),
            "files": list(self.files),
            "components": [c.to_json_dict() for c in self.components],
            "residual": list(self.residual),
            "whitelist_ok": self.whitelist_ok,
        }

    def to_json_text(self, pretty: bool = False) -> str:
        if pretty:
            return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)
        return canonical_json(self.to_json_dict())


def generate_sbom(
    reports: list[ScanReport],
    index: ProductIndex,
    embedder,
    *,
    similarity: Similarity = Similarity.COSINE,
    threshold: float = 0.5,
    prob_epsilon: float = 1e-6,
    tool_config: dict | None = None,
) -> SbomDocument:
    """Match every candidate string and reduce accepted matches to components.

    Components are keyed by (product, extracted dotted version) and carry
    their evidence strings; rejected or unmatchable strings land in the
    residual list. Output ordering is deterministic: product then version
    ascending, evidence and residual sorted and deduplicated.
    """
    config = {
        "similarity": Similarity(similarity).value,
        "threshold": threshold,
        "prob_epsilon": prob_epsilon,
        "encoder_fingerprint": index.fingerprint,
    }
    if tool_config:
        config.update(tool_config)
    tool = {
        "name": TOOL_NAME,
        "version": _package_version(),
        "config_hash": sha256_hex(canonical_json(config).encode("utf-8")),
    }

    matches: dict[str, MatchResult] = {}
    components: dict[tuple[str, str], SbomComponent] = {}
    residual: set[str] = set()
    for report in reports:
        for candidate in report.candidates:
            text = candidate.text
            result = matches.get(text)
            if result is None:
                result = match_string(
                    index, text, embedder, similarity, threshold, prob_epsilon
                )
                matches[text] = result
            if not result.accepted:
                residual.add(text)
                continue
            version = extract_version(text) or ""
            key = (result.product, version)
            component = components.get(key)
            if component is None:
                components[key] = SbomComponent(
                    product=result.product, version=version,
                    evidence=[text], max_probability=result.probability,
                )
            else:
                if text not in component.evidence:
                    component.evidence.append(text)
                component.max_probability = max(component.max_probability, result.probability)

    ordered = [components[key] for key in sorted(components)]
    for component in ordered:
        component.evidence.sort()
    return SbomDocument(
        tool=tool,
        files=[r.path for r in reports],
        components=ordered,
        residual=sorted(residual),
        whitelist_ok=True,
    )


@dataclass
class CveFeed:
    """Local vulnerability feed: (product, version) -> CVE identifiers."""

    entries: dict[tuple[str, str], list[str]]

    def get(self, product: str, version: str) -> list[str]:
        return self.entries.get((product, version), [])


def load_cve_feed(path: str) -> CveFeed:
    """Read a JSONL feed of {"product","version","cves":[...]} lines."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise IoError(f"cannot read CVE feed {path}: {exc}") from exc
    entries: dict[tuple[str, str], list[str]] = {}
    for line_no, line in enumerate(raw_lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            product, version = obj["product"], obj["version"]
            cves = obj["cves"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FeedParseError(f"feed line {line_no}: {exc}") from exc
        if not isinstance(cves, list) or not all(
            isinstance(c, str) and CVE_ID_RE.fullmatch(c) for c in cves
        ):
            raise FeedParseError(f"feed line {line_no}: bad CVE id list {cves!r}")
        bucket = entries.setdefault((str(product), str(version)), [])
        bucket.extend(c for c in cves if c not in bucket)
    return CveFeed(entries=entries)


def lookup_cves(doc: SbomDocument, feed: CveFeed) -> SbomDocument:
    """Attach feed CVEs to each component and recompute the whitelist verdict:
    whitelist_ok is true iff no component carries any CVE."""
    components = [
        SbomComponent(
            product=c.product, version=c.version, evidence=list(c.evidence),
            max_probability=c.max_probability,
            cves=sorted(feed.get(c.product, c.version)),
        )
        for c in doc.components
    ]
    return SbomDocument(
        tool=dict(doc.tool),
        files=list(doc.files),
        components=components,
        residual=list(doc.residual),
        whitelist_ok=not any(c.cves for c in components),
    )


def _package_version() -> str:
    from . import __version__

    return __version__
