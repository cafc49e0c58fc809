"""Byte-pair encoding: greedy pair merges over a word-frequency table.

Subwords that do not end a word carry a trailing ``@@`` continuation
marker, so ``join_bpe`` can restore the original tokens.  Words that
themselves end in ``@@`` cannot be round-tripped.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Sequence

from plnmt.errors import ContractError, FormatError
from plnmt.textpipe.vocab import is_reserved_token

END = "</w>"
CONT = "@@"
HEADER = "BPE v1"


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + END,)


def _pairs(symbols: Sequence[str]):
    return zip(symbols, symbols[1:])


def _merge_symbols(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    a, b = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


class BpeModel:
    def __init__(self, merges: Sequence[tuple[str, str]]):
        self.merges = [tuple(m) for m in merges]
        self.ranks = {pair: r for r, pair in enumerate(self.merges)}
        self._cache: dict[str, list[str]] = {}

    def __len__(self) -> int:
        return len(self.merges)

    def __eq__(self, other) -> bool:
        return isinstance(other, BpeModel) and self.merges == other.merges

    def segment(self, word: str) -> list[str]:
        """Subword units of one word, with continuation markers."""
        if not word or is_reserved_token(word):
            return [word]
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            best = min(_pairs(symbols), key=lambda p: self.ranks.get(p, len(self.ranks)))
            if best not in self.ranks:
                break
            symbols = _merge_symbols(symbols, best)
        pieces = [s + CONT for s in symbols[:-1]] + [symbols[-1][:-len(END)]]
        self._cache[word] = pieces
        return pieces

    def apply(self, tokens: Iterable[str]) -> list[str]:
        out: list[str] = []
        for tok in tokens:
            out.extend(self.segment(tok))
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{HEADER} {len(self.merges)}\n")
            for a, b in self.merges:
                fh.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "BpeModel":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        head = lines[0].split()
        if len(head) != 3 or " ".join(head[:2]) != HEADER or not head[2].isdigit():
            raise FormatError(f"{path}: expected header '{HEADER} <num_merges>'")
        count = int(head[2])
        body = [line for line in lines[1:] if line]
        if len(body) != count:
            raise FormatError(f"{path}: header announces {count} merges, found {len(body)}")
        merges = []
        for lineno, line in enumerate(body, start=2):
            parts = line.split(" ")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected one symbol pair")
            merges.append((parts[0], parts[1]))
        return cls(merges)


def join_bpe(tokens: Iterable[str]) -> list[str]:
    """Undo :meth:`BpeModel.apply` by gluing continuation pieces."""
    out: list[str] = []
    buf = ""
    for tok in tokens:
        if tok.endswith(CONT) and not is_reserved_token(tok):
            buf += tok[:-len(CONT)]
        else:
            out.append(buf + tok)
            buf = ""
    if buf:
        out.append(buf)
    return out


def learn_bpe(corpus: Iterable[Sequence[str]], num_merges: int) -> BpeModel:
    """Learn up to ``num_merges`` merges from tokenized sentences.

    Each round merges the most frequent adjacent symbol pair; ties go to the
    lexicographically smallest pair.  Stops early when no pair is left.
    """
    if num_merges < 0:
        raise ContractError("num_merges must be >= 0")
    freqs = Counter(tok for sent in corpus for tok in sent if tok and not is_reserved_token(tok))
    if not freqs:
        raise ContractError("cannot learn BPE from an empty corpus")
    words = [list(_word_symbols(w)) for w in sorted(freqs)]
    counts = [freqs[w] for w in sorted(freqs)]

    stats: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, syms in enumerate(words):
        for pair in _pairs(syms):
            stats[pair] += counts[idx]
            where[pair].add(idx)

    merges = []
    while len(merges) < num_merges and stats:
        best = min(stats.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        for idx in sorted(where.pop(best, ())):
            old = words[idx]
            for pair in _pairs(old):
                stats[pair] -= counts[idx]
                if stats[pair] <= 0:
                    del stats[pair]
            new = list(_merge_symbols(tuple(old), best))
            words[idx] = new
            for pair in _pairs(new):
                stats[pair] += counts[idx]
                where[pair].add(idx)
        stats.pop(best, None)
    return BpeModel(merges)
