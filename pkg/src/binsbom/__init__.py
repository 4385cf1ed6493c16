"""binsbom: version-string extraction from ELF/PE binaries and similarity-based
product matching for reduced SBOM generation and CVE lookup."""

__version__ = "0.1.0"

from .binscan import (
    DEFAULT_MIN_LEN,
    DEFAULT_VERSION_PATTERN,
    ExtractedString,
    FileFormat,
    ScanReport,
    detect_format,
    extract_strings,
    extract_version,
    filter_version_strings,
    scan_bytes,
    scan_file,
)
from .corpus import (
    LabeledPair,
    SplitMode,
    SplitSpec,
    VersionStringRecord,
    ingest_package,
    load_jsonl,
    load_pairs_jsonl,
    load_records_jsonl,
    make_pairs,
    normalize_product,
    save_jsonl,
    split_random,
    split_zero_shot,
    synth_corpus,
)
from .encoder import (
    EmbeddingModel,
    EncoderConfig,
    ExternalEncoder,
    encode,
    encode_batch,
    encode_text,
    external_encode,
    init_model,
)
from .evalx import (
    ExperimentResult,
    FULL_SCALE_REFERENCE,
    MetricsReport,
    ScoredPair,
    SweepEntry,
    classify_metrics,
    render_metrics_table,
    roc_auc,
    run_epoch_sweep,
    run_fully_trained,
    run_zero_shot,
    score_pairs,
)
from .sbomgen import (
    CveFeed,
    ExternalEmbedder,
    MatchResult,
    ModelEmbedder,
    ProductIndex,
    SbomComponent,
    SbomDocument,
    build_product_index,
    generate_sbom,
    load_cve_feed,
    lookup_cves,
    match_string,
)
from .simtrain import (
    LossReport,
    Similarity,
    TrainConfig,
    cosine_sim,
    dot_sim,
    pair_loss,
    pair_probability,
    train,
)
from .tokenizer import (
    TokenSequence,
    WordPieceVocab,
    detokenize,
    tokenize,
    train_vocab,
)
