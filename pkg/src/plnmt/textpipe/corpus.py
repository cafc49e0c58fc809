"""Parallel corpus ingestion and planner-code augmentation of targets."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from plnmt.errors import AlignmentError, ContractError, IngestionError
from plnmt.textpipe.vocab import EOC, code_token, is_code_token, is_eoc


@dataclass(frozen=True)
class SentenceRecord:
    source: tuple[str, ...]
    target: tuple[str, ...]
    target_tags: tuple[str, ...] | None = None
    codes: tuple[int, ...] | None = None


def tokenize(line: str) -> tuple[str, ...]:
    return tuple(tok for tok in line.strip().split(" ") if tok)


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def write_lines(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def load_parallel_corpus(src_path, tgt_path, tag_path=None) -> list[SentenceRecord]:
    """One record per line of pre-tokenized, space-separated text.

    Tags, when given, must align one-to-one with the target words.
    """
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    tags = read_lines(tag_path) if tag_path is not None else None
    if len(src) != len(tgt):
        line = min(len(src), len(tgt)) + 1
        raise IngestionError(
            f"line count mismatch at line {line}: {src_path} has {len(src)} lines, "
            f"{tgt_path} has {len(tgt)}")
    if tags is not None and len(tags) != len(tgt):
        line = min(len(tags), len(tgt)) + 1
        raise IngestionError(
            f"line count mismatch at line {line}: {tag_path} has {len(tags)} lines, "
            f"{tgt_path} has {len(tgt)}")
    records = []
    for i, (s, t) in enumerate(zip(src, tgt)):
        target = tokenize(t)
        target_tags = None
        if tags is not None:
            target_tags = tokenize(tags[i])
            if len(target_tags) != len(target):
                raise AlignmentError(
                    f"line {i + 1}: {len(target_tags)} tags for {len(target)} target words")
        records.append(SentenceRecord(tokenize(s), target, target_tags))
    return records


def code_prefix(codes: Sequence[int]) -> list[str]:
    return [code_token(c) for c in codes] + [EOC]


def augment_targets_with_codes(records: Sequence[SentenceRecord],
                               codes: Sequence[Sequence[int]] | None = None) -> list[SentenceRecord]:
    """Prefix each target with its planner codes and ``<eoc>``.

    ``codes`` defaults to the codes already stored on each record.
    """
    out = []
    for i, rec in enumerate(records):
        c = rec.codes if codes is None else (codes[i] if i < len(codes) else None)
        if c is None:
            raise ContractError(f"record {i} has no code assignment")
        c = tuple(int(v) for v in c)
        out.append(replace(rec, target=tuple(code_prefix(c)) + rec.target, codes=c))
    return out


def strip_codes(tokens: Sequence[str]) -> list[str]:
    """Remove the planner-code prefix (and any stray reserved planner token)."""
    tokens = list(tokens)
    for i, tok in enumerate(tokens):
        if is_eoc(tok):
            tokens = tokens[i + 1:]
            break
    else:
        i = 0
        while i < len(tokens) and is_code_token(tokens[i]):
            i += 1
        tokens = tokens[i:]
    return [t for t in tokens if not (is_code_token(t) or is_eoc(t))]
