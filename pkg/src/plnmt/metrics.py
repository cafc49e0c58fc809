"""Corpus BLEU, planner-code accuracies and code-usage histograms."""
from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from plnmt.errors import ContractError
from plnmt.structann import simplify_tags
from plnmt.textpipe.vocab import code_token, is_eoc

MAX_ORDER = 4


@dataclass
class BleuReport:
    bleu: float                 # percent
    precisions: list[float]     # percent, orders 1..4
    brevity_penalty: float
    ratio: float
    hyp_len: int
    ref_len: int

    def format(self) -> str:
        p = "/".join(f"{x:.1f}" for x in self.precisions)
        return (f"BLEU = {self.bleu:.2f}, {p} (BP={self.brevity_penalty:.3f}, "
                f"ratio={self.ratio:.3f}, hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                max_order: int = MAX_ORDER) -> BleuReport:
    """Unsmoothed corpus BLEU over tokenized sentences, single reference."""
    if len(hypotheses) != len(references):
        raise ContractError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if min(precisions) > 0:
        log_mean = sum(math.log(p) for p in precisions) / max_order
        geo = math.exp(log_mean)
    else:
        geo = 0.0
    ratio = hyp_len / ref_len if ref_len else 0.0
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    return BleuReport(100.0 * bp * geo, [100.0 * p for p in precisions], bp, ratio,
                      hyp_len, ref_len)


# ---------------------------------------------------------------------- code model / NMT accuracies

def structure_reconstruction_accuracy(code_model, records, return_token_level=False):
    """Fraction of records whose greedy tag decode from (X, extracted C) equals the gold structure.

    With ``return_token_level`` also returns the position-wise tag accuracy.
    """
    prepared = code_model.prepare(records)
    idx = [i for i, p in enumerate(prepared) if p is not None]
    if not idx:
        return (0.0, 0.0) if return_token_level else 0.0
    subset = [records[i] for i in idx]
    codes = code_model.extract(subset)
    seq_hits, tok_hits, tok_total = 0, 0, 0
    for start in range(0, len(idx), 256):
        chunk = list(range(start, min(start + 256, len(idx))))
        decoded = code_model.decode_tags([prepared[idx[j]][0] for j in chunk],
                                         [codes[j] for j in chunk])
        for j, pred in zip(chunk, decoded):
            gold = simplify_tags(subset[j].target_tags)
            seq_hits += pred == gold
            tok_hits += sum(a == b for a, b in zip(pred, gold))
            tok_total += max(len(pred), len(gold))
    seq = seq_hits / len(idx)
    if return_token_level:
        return seq, tok_hits / max(tok_total, 1)
    return seq


def code_prediction_accuracy(nmt_model, sources: Sequence[Sequence[str]],
                             codes: Sequence[Sequence[int]], return_token_level=False):
    """Fraction of sources for which greedy decoding emits exactly the assigned code prefix."""
    vocab = nmt_model.tgt_vocab
    if vocab.num_codes == 0 or vocab.eoc_id is None:
        raise ContractError("model vocabulary lacks planner-code tokens")
    if len(sources) != len(codes):
        raise ContractError("one code assignment per source is required")
    if not sources:
        return (0.0, 0.0) if return_token_level else 0.0
    N = len(codes[0])
    src_ids = [nmt_model.src_vocab.encode(s) or [nmt_model.src_vocab.eos_id] for s in sources]
    seq_hits, tok_hits = 0, 0
    for start in range(0, len(src_ids), 256):
        out = nmt_model.greedy_batch(src_ids[start:start + 256], N)
        for row, assigned in zip(out, codes[start:start + 256]):
            want = [vocab.code_id(c) for c in assigned]
            got = list(row)
            seq_hits += got == want
            tok_hits += sum(a == b for a, b in zip(got, want))
    seq = seq_hits / len(src_ids)
    if return_token_level:
        return seq, tok_hits / (len(src_ids) * N)
    return seq


def cluster_purity(assignments: Sequence, labels: Sequence) -> float:
    """Weighted majority-label fraction of each assignment cluster."""
    if len(assignments) != len(labels):
        raise ContractError("assignments and labels differ in length")
    if not assignments:
        return 0.0
    clusters: dict = {}
    for a, y in zip(assignments, labels):
        clusters.setdefault(tuple(a) if not isinstance(a, int) else a, Counter())[y] += 1
    return sum(c.most_common(1)[0][1] for c in clusters.values()) / len(assignments)


# ---------------------------------------------------------------------- code distribution

@dataclass
class CodeBin:
    code: tuple[int, ...]
    count: int
    fraction: float

    @property
    def label(self) -> str:
        return " ".join(code_token(c) for c in self.code)


def code_distribution(assignments: Sequence[Sequence[int]], n: int | None = None,
                      k: int | None = None) -> list[CodeBin]:
    """Count of every code tuple, most frequent first.

    With ``n`` and ``k`` all ``k ** n`` tuples are listed, unused ones at zero.
    """
    counts = Counter(tuple(int(v) for v in a) for a in assignments)
    total = sum(counts.values())
    if n is not None and k is not None:
        for code in itertools.product(range(k), repeat=n):
            counts.setdefault(code, 0)
    bins = [CodeBin(code, c, c / total if total else 0.0) for code, c in counts.items()]
    bins.sort(key=lambda b: (-b.count, b.code))
    return bins


def distribution_csv(bins: Sequence[CodeBin]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["code", "count", "fraction"])
    for b in bins:
        writer.writerow([b.label, b.count, f"{b.fraction:.6f}"])
    return buf.getvalue()


def parse_code_line(line: str) -> tuple[int, ...]:
    from plnmt.textpipe.vocab import parse_code_token
    return tuple(parse_code_token(t) for t in line.split() if not is_eoc(t))

