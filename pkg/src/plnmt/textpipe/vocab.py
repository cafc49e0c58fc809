"""Token/id vocabularies with reserved special and planner-code tokens."""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from typing import Iterable, Sequence

from plnmt.errors import ContractError, FormatError

PAD = "<pad>"
UNK = "<unk>"
EOS = "</s>"
EOC = "<eoc>"

_CODE_RE = re.compile(r"^(?:<|⟨)c(\d+)(?:>|⟩)$")
_EOC_FORMS = {EOC, "⟨eoc⟩"}


def code_token(k: int) -> str:
    """Surface form of 0-based code value ``k`` (``0 -> '<c1>'``)."""
    return f"<c{int(k) + 1}>"


def parse_code_token(text: str) -> int:
    """0-based code value from ``<c3>``, ``⟨c3⟩`` or a bare integer ``2``."""
    text = text.strip()
    m = _CODE_RE.match(text)
    if m:
        value = int(m.group(1)) - 1
        if value < 0:
            raise ContractError(f"code tokens are 1-indexed, got {text!r}")
        return value
    if text.isdigit():
        return int(text)
    raise ContractError(f"not a planner code token: {text!r}")


def is_code_token(token: str) -> bool:
    return bool(_CODE_RE.match(token))


def is_eoc(token: str) -> bool:
    return token in _EOC_FORMS


def is_reserved_token(token: str) -> bool:
    return token in (PAD, UNK, EOS) or is_eoc(token) or is_code_token(token)


def reserved_tokens(num_codes: int = 0, with_eoc: bool = False) -> list[str]:
    tokens = [PAD, UNK, EOS]
    if with_eoc or num_codes:
        tokens.append(EOC)
        tokens.extend(code_token(k) for k in range(num_codes))
    return tokens


class Vocabulary:
    """Bijective token/id map.  Ids 0, 1, 2 are pad, unk and eos."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(tokens)
        self.stoi = {}
        for i, tok in enumerate(self.itos):
            if tok in self.stoi:
                raise FormatError(f"duplicate vocabulary token {tok!r} at line {i + 1}")
            self.stoi[tok] = i
        for i, tok in enumerate((PAD, UNK, EOS)):
            if i >= len(self.itos) or self.itos[i] != tok:
                raise FormatError(f"vocabulary id {i} must be {tok!r}")
        self.pad_id, self.unk_id, self.eos_id = 0, 1, 2
        self.eoc_id = self.stoi.get(EOC)
        self.code_ids = []
        k = 0
        while code_token(k) in self.stoi:
            self.code_ids.append(self.stoi[code_token(k)])
            k += 1
        self._code_values = {tid: value for value, tid in enumerate(self.code_ids)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    @property
    def num_codes(self) -> int:
        return len(self.code_ids)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        out = []
        for tok in tokens:
            if is_code_token(tok) and tok not in self.stoi:
                tok = code_token(parse_code_token(tok))
            elif is_eoc(tok):
                tok = EOC
            out.append(self.stoi.get(tok, self.unk_id))
        return out

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[int(i)] for i in ids]

    def code_id(self, value: int) -> int:
        if not 0 <= value < self.num_codes:
            raise ContractError(f"code value {value} out of range for K={self.num_codes}")
        return self.code_ids[value]

    def code_value(self, token_id: int) -> int | None:
        return self._code_values.get(int(token_id))

    def is_reserved_id(self, token_id: int) -> bool:
        return token_id in (self.pad_id, self.unk_id, self.eos_id, self.eoc_id) or \
            int(token_id) in self._code_values

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.itos:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        return cls(tokens)


def build_vocab(corpus: Iterable[Sequence[str]], cap: int, num_codes: int = 0,
                with_eoc: bool = False) -> Vocabulary:
    """Reserved tokens first, then types by descending count (ties lexicographic), up to ``cap``."""
    reserved = reserved_tokens(num_codes, with_eoc)
    if cap <= len(reserved):
        raise ContractError(f"vocabulary cap {cap} leaves no room after {len(reserved)} reserved tokens")
    counts = Counter(tok for sent in corpus for tok in sent if not is_reserved_token(tok))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    tokens = reserved + [tok for tok, _ in ranked[:cap - len(reserved)]]
    return Vocabulary(tokens)
