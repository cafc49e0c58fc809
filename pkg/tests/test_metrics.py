import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plnmt.errors import ContractError
from plnmt.metrics import (
    cluster_purity, code_distribution, code_prediction_accuracy, corpus_bleu,
    distribution_csv, parse_code_line, structure_reconstruction_accuracy,
)
from plnmt.structann import simplify_tags
from plnmt.textpipe import SentenceRecord, build_vocab


def brute_bleu(hyps, refs):
    """Clipped n-gram counts by list scans; no Counters."""
    logs, hl, rl = [], 0, 0
    for n in range(1, 5):
        match = total = 0
        for h, r in zip(hyps, refs):
            hg = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            rg = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            total += len(hg)
            for g in set(hg):
                match += min(hg.count(g), rg.count(g))
        if match == 0:
            return 0.0
        logs.append(math.log(match / total))
    hl = sum(len(h) for h in hyps)
    rl = sum(len(r) for r in refs)
    bp = 1.0 if hl >= rl else math.exp(1 - rl / hl)
    return 100 * bp * math.exp(sum(logs) / 4)


def random_corpus(rng, n, vocab=6):
    words = [f"w{i}" for i in range(vocab)]
    return [[str(w) for w in rng.choice(words, size=rng.integers(4, 12))] for _ in range(n)]


class TestBleu:
    def test_identity(self):
        refs = random_corpus(np.random.default_rng(0), 20)
        report = corpus_bleu(refs, refs)
        assert report.bleu == pytest.approx(100.0)
        assert report.brevity_penalty == 1.0

    def test_repeated_word_clipped(self):
        report = corpus_bleu([["the"] * 4], [["the", "cat", "sat", "down"]])
        assert report.precisions[0] == pytest.approx(25.0)
        assert report.bleu == 0.0

    def test_brevity_penalty(self):
        ref = ["a", "b", "c", "d", "e", "f", "g", "h"]
        report = corpus_bleu([ref[:4]], [ref])
        assert report.brevity_penalty == pytest.approx(math.exp(1 - 8 / 4))
        assert report.bleu == pytest.approx(100 * math.exp(-1))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            refs = random_corpus(rng, 15, vocab=4)
            hyps = random_corpus(rng, 15, vocab=4)
            assert corpus_bleu(hyps, refs).bleu == pytest.approx(brute_bleu(hyps, refs), abs=0.01)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_sentence_order_invariant(self, seed):
        rng = np.random.default_rng(seed)
        refs = random_corpus(rng, 8, vocab=3)
        hyps = random_corpus(rng, 8, vocab=3)
        perm = rng.permutation(8)
        a = corpus_bleu(hyps, refs).bleu
        b = corpus_bleu([hyps[i] for i in perm], [refs[i] for i in perm]).bleu
        assert a == pytest.approx(b, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            corpus_bleu([["a"]], [])

    def test_empty_hypothesis(self):
        assert corpus_bleu([[]], [["a", "b"]]).bleu == 0.0

    def test_report_format(self):
        line = corpus_bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d"]]).format()
        assert line.startswith("BLEU = 100.00, 100.0/100.0/100.0/100.0")


class OracleCodeModel:
    """Decodes the gold structure when handed the code it assigned."""

    def __init__(self, records, rng=None):
        self.gold = {r.source: simplify_tags(r.target_tags) for r in records}
        self.rng = rng

    def prepare(self, records):
        return [((r.source,), None) if simplify_tags(r.target_tags) else None for r in records]

    def extract(self, records):
        return [(0,)] * len(records)

    def decode_tags(self, sources, codes):
        if self.rng is None:
            return [self.gold[s[0]] for s in sources]
        return [list(self.rng.choice(["N", "V"], size=2)) for _ in sources]


class ScriptedNmt:
    def __init__(self, vocab, outputs):
        self.src_vocab = build_vocab([["x", "y"]], 10)
        self.tgt_vocab = vocab
        self.outputs = list(outputs)

    def greedy_batch(self, sources, steps):
        out, self.outputs = self.outputs[:len(sources)], self.outputs[len(sources):]
        return [row[:steps] for row in out]


class TestAccuracies:
    def _records(self):
        return [SentenceRecord((f"s{i}",), ("a", "b"), tags)
                for i, tags in enumerate([("NN", "VBD"), ("VB", "NN"), ("DT", "NN")])]

    def test_perfect_reconstruction(self):
        recs = self._records()
        assert structure_reconstruction_accuracy(OracleCodeModel(recs), recs) == 1.0

    def test_random_reconstruction_near_chance(self):
        recs = [SentenceRecord((f"s{i}",), ("a", "b"), ("NN", "VBD")) for i in range(4000)]
        acc, tok = structure_reconstruction_accuracy(
            OracleCodeModel(recs, np.random.default_rng(0)), recs, return_token_level=True)
        # a random N/V pair equals [N, V] a quarter of the time
        assert acc == pytest.approx(0.25, abs=0.03)
        assert tok == pytest.approx(0.5, abs=0.03)

    def test_empty_structures_are_skipped(self):
        recs = self._records() + [SentenceRecord(("z",), ("a",), ("DT",))]
        assert structure_reconstruction_accuracy(OracleCodeModel(recs), recs) == 1.0

    def test_code_prediction(self):
        vocab = build_vocab([["a"]], 20, num_codes=3, with_eoc=True)
        codes = [(0, 2), (1, 1), (2, 0), (1, 0)]
        rows = [[vocab.code_id(a), vocab.code_id(b)] for a, b in codes]
        rows[3] = [vocab.code_id(1), vocab.code_id(2)]
        model = ScriptedNmt(vocab, rows)
        seq, tok = code_prediction_accuracy(model, [["x"]] * 4, codes, return_token_level=True)
        assert seq == 0.75
        assert tok == 7 / 8

    def test_random_code_prediction_near_chance(self):
        vocab = build_vocab([["a"]], 20, num_codes=4, with_eoc=True)
        rng = np.random.default_rng(1)
        codes = [tuple(int(c) for c in rng.integers(0, 4, size=2)) for _ in range(4000)]
        rows = [[vocab.code_id(int(c)) for c in rng.integers(0, 4, size=2)] for _ in codes]
        acc = code_prediction_accuracy(ScriptedNmt(vocab, rows), [["x"]] * 4000, codes)
        assert acc == pytest.approx(1 / 16, abs=0.015)

    def test_code_prediction_needs_code_vocab(self):
        model = ScriptedNmt(build_vocab([["a"]], 10), [])
        with pytest.raises(ContractError):
            code_prediction_accuracy(model, [["x"]], [(0,)])


class TestDistribution:
    def test_sums_to_one(self):
        rng = np.random.default_rng(2)
        codes = [tuple(int(c) for c in rng.integers(0, 4, size=2)) for _ in range(500)]
        bins = code_distribution(codes, n=2, k=4)
        assert len(bins) == 16
        assert sum(b.fraction for b in bins) == pytest.approx(1.0)
        assert sum(b.count for b in bins) == 500
        assert [b.count for b in bins] == sorted((b.count for b in bins), reverse=True)

    def test_identical_assignments_single_bin(self):
        bins = code_distribution([(1, 0)] * 50)
        assert len(bins) == 1
        assert bins[0].fraction == 1.0
        assert bins[0].label == "<c2> <c1>"

    def test_csv(self):
        text = distribution_csv(code_distribution([(0, 1), (0, 1), (1, 1)]))
        assert text.splitlines() == ["code,count,fraction", "<c1> <c2>,2,0.666667",
                                     "<c2> <c2>,1,0.333333"]

    def test_parse_code_line(self):
        assert parse_code_line("<c2> <c1> <eoc>") == (1, 0)
        assert parse_code_line("⟨c4⟩ ⟨c1⟩") == (3, 0)

    def test_purity(self):
        assert cluster_purity([(0,), (0,), (1,), (1,)], [0, 0, 1, 1]) == 1.0
        assert cluster_purity([(0,)] * 4, [0, 1, 0, 1]) == 0.5
        assert cluster_purity([0, 0, 1], ["a", "b", "b"]) == pytest.approx(2 / 3)
        with pytest.raises(ContractError):
            cluster_purity([0], [])
