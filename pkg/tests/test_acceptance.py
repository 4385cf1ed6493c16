"""Acceptance suite: one test per criterion, each at its stated tolerance and
runtime budget, printing one pass/fail line (run with -s to see them live).

The end-to-end thresholds in criterion 6/7 fixtures were frozen from oracle
runs of the reference pipeline; every stage seed is pinned, so the numbers
reproduce bitwise in this environment.
"""

import statistics
import subprocess
import time
from contextlib import contextmanager

import numpy as np

from conftest import (
    char_vocab,
    elf_bytes,
    finite_diff_pair_grads,
    grad_relative_error,
    make_model,
)

from binsbom.binscan import extract_strings
from binsbom.cli import main as cli_main
from binsbom.corpus import SplitMode, SplitSpec, make_pairs, split_random, split_zero_shot, synth_corpus
from binsbom.evalx import ScoredPair, classify_metrics, roc_auc, run_epoch_sweep, run_fully_trained, run_zero_shot
from binsbom.simtrain import Similarity, TrainConfig, cosine_sim, dot_sim, pair_loss_grads
from binsbom.tokenizer import SEP, detokenize, tokenize, train_vocab


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        print(f"[{name}] {status} in {elapsed:.2f}s (budget {budget_seconds:.0f}s)")
    assert elapsed < budget_seconds, f"{name}: {elapsed:.2f}s exceeds {budget_seconds}s"


def test_criterion_1_similarity_math():
    with criterion("criterion 1: similarity math", 1.0):
        rng = np.random.default_rng(101)
        for _ in range(1000):
            dim = int(rng.integers(2, 65))
            u = rng.uniform(-1, 1, dim)
            v = rng.uniform(-1, 1, dim)
            if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
                continue
            cos = cosine_sim(u, v)
            dot = dot_sim(u, v)
            # inner product equals |u| |v| cos(angle)
            assert abs(dot - np.linalg.norm(u) * np.linalg.norm(v) * cos) < 1e-9
            assert -1.0 <= cos <= 1.0
            assert cos == cosine_sim(v, u)
            assert dot == dot_sim(v, u)
            alpha = float(rng.uniform(1e-3, 1e3))
            assert abs(cosine_sim(alpha * u, v) - cos) <= 1e-12


def test_criterion_2_gradient_correctness():
    with criterion("criterion 2: gradient correctness", 5.0):
        vocab = char_vocab("abc12.")
        rng = np.random.default_rng(202)
        checked = 0
        for similarity in (Similarity.COSINE, Similarity.DOT):
            for seed, hidden in ((1, None), (2, None), (3, 6)):
                model = make_model(vocab, embed_dim=6, seed=seed, hidden_dim=hidden)
                config = TrainConfig(similarity=similarity)
                label = int(rng.integers(0, 2))
                product = "".join(rng.choice(list("abc"), size=3))
                seq_p = tokenize(product, vocab)
                seq_s = tokenize(product + " 1.2", vocab)
                _, acc = pair_loss_grads(model, seq_p, seq_s, label, config)
                numeric = finite_diff_pair_grads(model, seq_p, seq_s, label, config)
                assert grad_relative_error(acc.token_table, numeric["token_table"]) < 1e-4
                if hidden is not None:
                    assert grad_relative_error(acc.weight, numeric["weight"]) < 1e-4
                    assert grad_relative_error(acc.bias, numeric["bias"]) < 1e-4
                checked += 1
        assert checked >= 5


def test_criterion_3_metrics_oracle():
    with criterion("criterion 3: metrics oracle", 10.0):
        rng = np.random.default_rng(303)
        for _ in range(500):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # coarse quantization forces tie groups
            probs = np.round(rng.uniform(0, 1, n), int(rng.integers(1, 4)))
            scored = [ScoredPair(float(p), int(y)) for p, y in zip(probs, labels)]

            pos = probs[labels == 1]
            neg = probs[labels == 0]
            brute = (
                np.sum(pos[:, None] > neg[None, :]) + 0.5 * np.sum(pos[:, None] == neg[None, :])
            ) / (len(pos) * len(neg))
            assert roc_auc(scored) == brute

            report = classify_metrics(scored, threshold=0.5)
            assert sum(report.counts.values()) == n
            assert report.auc == brute


def test_criterion_4_strings_oracle():
    with criterion("criterion 4: GNU strings oracle", 30.0):
        rng = np.random.default_rng(404)
        printable = np.array(sorted({0x09} | set(range(0x20, 0x7F))), dtype=np.uint8)
        for i in range(1000):
            size = int(rng.integers(0, 65537))
            style = i % 3
            if style == 0:
                buf = rng.integers(0, 256, size).astype(np.uint8).tobytes()
            elif style == 1:
                # alternating printable runs and junk, printable-heavy
                chunks = []
                remaining = size
                while remaining > 0:
                    run = int(rng.integers(1, 50))
                    run = min(run, remaining)
                    if rng.random() < 0.6:
                        chunks.append(rng.choice(printable, run).tobytes())
                    else:
                        chunks.append(rng.integers(0, 256, run).astype(np.uint8).tobytes())
                    remaining -= run
                buf = b"".join(chunks)
            else:
                buf = bytearray(rng.integers(0, 256, size).astype(np.uint8).tobytes())
                for _ in range(int(rng.integers(0, 6))):
                    if size < 16:
                        break
                    at = int(rng.integers(0, size - 14))
                    buf[at:at + 13] = b"version 1.2.3"
                buf = bytes(buf)

            ours = [s.text for s in extract_strings(buf, min_len=4)]
            proc = subprocess.run(
                ["strings", "-n", "4"], input=buf, capture_output=True, check=True
            )
            theirs = proc.stdout.decode("ascii").splitlines()
            assert ours == theirs, f"mismatch on fuzz buffer {i} (size {len(buf)})"


def test_criterion_5_split_invariants():
    with criterion("criterion 5: split invariants", 5.0):
        rng = np.random.default_rng(505)
        for _ in range(100):
            n_products = int(rng.integers(5, 27))
            records = synth_corpus(n_products, int(rng.integers(3, 25)), seed=int(rng.integers(1e6)))
            k = int(rng.integers(2, n_products - 1))
            spec = SplitSpec(
                mode=SplitMode.ZERO_SHOT, k_classes=k,
                n_per_class=int(rng.integers(2, 40)), seed=int(rng.integers(1e6)),
            )
            negatives = int(rng.integers(0, 2))
            if negatives and (k < 2 or n_products - k < 2):
                negatives = 0
            pair_seed = int(rng.integers(1e6))
            train_a, test_a = split_zero_shot(records, spec, negatives, pair_seed)
            train_b, test_b = split_zero_shot(records, spec, negatives, pair_seed)
            assert (train_a, test_a) == (train_b, test_b)
            assert {p.product for p in train_a} & {p.product for p in test_a} == set()

            pairs = make_pairs(records, 1, seed=pair_seed)
            random_spec = SplitSpec(mode=SplitMode.RANDOM, seed=int(rng.integers(1e6)))
            tr_a, te_a = split_random(pairs, random_spec)
            tr_b, te_b = split_random(pairs, random_spec)
            assert (tr_a, te_a) == (tr_b, te_b)
            n = len(pairs)
            assert len(tr_a) == int(np.floor(0.8 * n))
            assert len(te_a) == n - len(tr_a)


# Frozen fixture for criterion 6: 30 products x 200 samples, negatives 1,
# spec'd training defaults (batch 64, 1 epoch, lr 0.05, cosine), vocabulary
# budget proportionate to the 6k-record corpus. Oracle medians recorded in
# the ledger; thresholds below are the acceptance bounds.
END_TO_END_CORPUS_SEED = 20260811
END_TO_END_VOCAB = 300
END_TO_END_SEEDS = (1, 2, 3, 4, 5)


def test_criterion_6_end_to_end_synthetic():
    with criterion("criterion 6: end-to-end synthetic experiments", 120.0):
        records = synth_corpus(30, 200, seed=END_TO_END_CORPUS_SEED)
        fully, zero = [], []
        for seed in END_TO_END_SEEDS:
            ft = run_fully_trained(
                records, SplitSpec(mode=SplitMode.RANDOM), TrainConfig(),
                vocab_target_size=END_TO_END_VOCAB, root_seed=seed,
            )
            zs = run_zero_shot(
                records, SplitSpec(mode=SplitMode.ZERO_SHOT), TrainConfig(),
                vocab_target_size=END_TO_END_VOCAB, root_seed=seed,
            )
            fully.append(ft.metrics.accuracy)
            zero.append(zs.metrics.accuracy)
        assert statistics.median(fully) > 0.75, f"fully-trained median {fully}"
        assert sum(acc > 0.5 for acc in zero) >= 4, f"zero-shot above chance {zero}"
        assert sum(f >= z for f, z in zip(fully, zero)) >= 4, (fully, zero)


# Frozen fixture for criterion 7: tiny zero-shot train side (6 classes x 10
# records), enlarged embedding (128), aggressive lr; oracle run showed F1
# degradation at 10 epochs and training-loss descent in 5/5 seeds.
OVERFIT_CORPUS_SEED = 777
OVERFIT_KW = dict(embed_dim=128, vocab_target_size=150)
OVERFIT_LR = 0.5


def test_criterion_7_epoch_sweep_overfits():
    with criterion("criterion 7: epoch-sweep overfitting", 120.0):
        records = synth_corpus(12, 30, seed=OVERFIT_CORPUS_SEED)
        spec = SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=6, n_per_class=10)
        degraded = 0
        for seed in range(1, 6):
            entries = run_epoch_sweep(
                records, spec, TrainConfig(learning_rate=OVERFIT_LR),
                (1, 2, 5, 10), root_seed=seed, **OVERFIT_KW,
            )
            assert [e.epochs for e in entries] == [1, 2, 5, 10]
            first, last = entries[0].result, entries[-1].result
            degraded += last.metrics.f1 <= first.metrics.f1
            assert last.train_loss.per_epoch_mean_loss[-1] <= \
                first.train_loss.per_epoch_mean_loss[-1]
        assert degraded >= 4, f"F1 degraded in only {degraded}/5 seeds"


def test_criterion_8_tokenizer_round_trip():
    with criterion("criterion 8: tokenizer round-trip", 5.0):
        records = synth_corpus(10, 50, seed=808)
        texts = [r.product for r in records] + [r.version_string for r in records]
        vocab = train_vocab(texts, target_size=250)
        alphabet = sorted({c for t in texts for c in t if not c.isspace()})
        rng = np.random.default_rng(818)
        for _ in range(1000):
            words = [
                "".join(rng.choice(alphabet, size=int(rng.integers(1, 9))))
                for _ in range(int(rng.integers(1, 11)))
            ]
            text = " ".join(words)
            assert detokenize(tokenize(text, vocab)) == text

        long_seq = tokenize("a " * 600, vocab)
        assert len(long_seq) == vocab.max_len
        assert long_seq.pieces[-1] == SEP


def test_criterion_9_sbom_determinism(tmp_path):
    with criterion("criterion 9: SBOM determinism + scale invariance", 5.0):
        paths = {name: tmp_path / name for name in (
            "records.jsonl", "pairs.jsonl", "vocab.json", "model.json", "index.json",
        )}
        assert cli_main(["corpus", "synth", "--products", "6", "--per-product", "15",
                         "--seed", "9", "--out", str(paths["records.jsonl"])]) == 0
        assert cli_main(["corpus", "pairs", "--records", str(paths["records.jsonl"]),
                         "--negatives", "1", "--seed", "9",
                         "--out", str(paths["pairs.jsonl"])]) == 0
        assert cli_main(["train", "--pairs", str(paths["pairs.jsonl"]),
                         "--vocab", str(paths["vocab.json"]),
                         "--model", str(paths["model.json"]),
                         "--vocab-size", "120", "--embed-dim", "12", "--seed", "9",
                         "--out", str(tmp_path / "loss.json")]) == 0
        import json as _json
        products = sorted({
            _json.loads(line)["product"]
            for line in paths["records.jsonl"].read_text().splitlines()
        })
        assert cli_main(["index", "--model", str(paths["model.json"]),
                         "--vocab", str(paths["vocab.json"]),
                         "--out", str(paths["index.json"]), *products]) == 0

        binary = tmp_path / "app.bin"
        binary.write_bytes(elf_bytes(
            f"{products[0]} 3.1.4\x00{products[1]} 1.2.13\x00unrelated text\x00".encode()
        ))
        out1, out2 = tmp_path / "sbom1.json", tmp_path / "sbom2.json"
        base = ["sbom", str(binary), "--index", str(paths["index.json"]),
                "--model", str(paths["model.json"]), "--vocab", str(paths["vocab.json"])]
        assert cli_main(base + ["--out", str(out1)]) == 0
        assert cli_main(base + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

        # cosine match argmax and probability are invariant to query rescaling
        from binsbom.sbomgen import ProductIndex, match_vector
        index = ProductIndex.load(str(paths["index.json"]))
        rng = np.random.default_rng(99)
        for _ in range(20):
            query = rng.normal(size=index.vectors.shape[1])
            base_match = match_vector(index, query, "q")
            for alpha in (4.0, 3.7, 0.02):
                scaled = match_vector(index, alpha * query, "q")
                assert scaled.product == base_match.product
                assert abs(scaled.probability - base_match.probability) <= 1e-12
                assert scaled.accepted == base_match.accepted
