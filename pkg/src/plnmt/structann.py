"""Coarse structural annotation from POS tags.

Tags starting with ``N`` become ``N``, tags starting with ``V`` become ``V``,
``PRP`` (and anything prefixed by it, e.g. ``PRP$``) is kept, ``,`` and ``.``
are kept, everything else is dropped; then runs of equal tags collapse.
"""
from __future__ import annotations

import sys
from typing import Iterable, Sequence

ALPHABET = ("N", "V", "PRP", ",", ".")


def coarse_tag(tag: str) -> str | None:
    if tag.startswith("N"):
        return "N"
    if tag.startswith("V"):
        return "V"
    if tag.startswith("PRP"):
        return "PRP"
    if tag in (",", "."):
        return tag
    return None


def simplify_tags(tags: Sequence[str]) -> list[str]:
    out: list[str] = []
    for tag in tags:
        mapped = coarse_tag(tag)
        if mapped is not None and (not out or out[-1] != mapped):
            out.append(mapped)
    return out


def simplify_line(line: str) -> str:
    return " ".join(simplify_tags(line.split()))


def filter_stream(lines: Iterable[str], out=sys.stdout) -> None:
    for line in lines:
        out.write(simplify_line(line) + "\n")
