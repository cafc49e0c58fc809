"""Length-normalised beam search with optional forced planner-code prefixes.

A *stepper* is anything with ``vocab_size``, ``eos_id``, ``initial_state()``,
``step(prev_ids, state) -> (log_probs, state)`` and
``select(state, rows) -> state``; :class:`plnmt.nmt.NmtStepper` is the
production one.  States are batched along their first axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from plnmt.errors import ContractError
from plnmt.textpipe.bpe import join_bpe
from plnmt.textpipe.corpus import strip_codes
from plnmt.textpipe.vocab import Vocabulary, is_code_token

__all__ = ["Hypothesis", "beam_search", "greedy_search", "strip_codes", "translate",
           "prefix_ids", "split_code_prefix"]


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    logprob: float
    finished: bool = False
    state: Any = field(default=None, repr=False)

    @property
    def score(self) -> float:
        return self.logprob / max(len(self.tokens), 1)


def default_max_len(stepper) -> int:
    n = getattr(stepper, "source_length", None)
    if n is None:
        raise ContractError("max_len is required for steppers without a source length")
    return 2 * n + 10


def _check_prefix(prefix: Sequence[int], vocab_size: int) -> list[int]:
    prefix = [int(t) for t in prefix]
    for t in prefix:
        if not 0 <= t < vocab_size:
            raise ContractError(f"forced token id {t} outside vocabulary of size {vocab_size}")
    return prefix


def beam_search(stepper, beam_size: int, max_len: int | None = None,
                forced_prefix: Sequence[int] | None = None) -> list[Hypothesis]:
    """Hypotheses ranked by ``logprob / length``, best first.

    Every step keeps the ``beam_size`` best expansions by cumulative log
    probability; expansions ending in end-of-sequence are set aside as
    finished.  The search stops when no live hypothesis can still beat the
    best finished score, or after ``max_len`` tokens (live hypotheses are
    then finished as they stand).  During the first ``len(forced_prefix)``
    steps only the forced token is allowed; its probability still counts.
    """
    if beam_size < 1:
        raise ContractError("beam_size must be >= 1")
    if max_len is None:
        max_len = default_max_len(stepper)
    prefix = _check_prefix(forced_prefix or [], stepper.vocab_size)
    eos = stepper.eos_id
    state = stepper.initial_state()
    live = [Hypothesis((), 0.0)]
    finished: list[Hypothesis] = []
    for t in range(max_len):
        prev = np.array([h.tokens[-1] if h.tokens else eos for h in live])
        logp, new_state = stepper.step(prev, state)
        if t < len(prefix):
            tok = prefix[t]
            cands = [(h.logprob + float(logp[i, tok]), i, tok) for i, h in enumerate(live)]
            cands.sort(key=lambda c: -c[0])
            cands = cands[:beam_size]
        else:
            total = np.array([h.logprob for h in live])[:, None] + logp
            flat = total.ravel()
            k = min(beam_size, flat.size)
            top = np.argsort(-flat, kind="stable")[:k]
            V = logp.shape[1]
            cands = [(float(flat[j]), int(j // V), int(j % V)) for j in top]
        rows = []
        next_live = []
        last = t == max_len - 1
        for lp, i, tok in cands:
            hyp = Hypothesis(live[i].tokens + (tok,), lp)
            if tok == eos or last:
                hyp.finished = True
                finished.append(hyp)
            else:
                next_live.append(hyp)
                rows.append(i)
        if not next_live:
            break
        state = stepper.select(new_state, np.array(rows))
        for j, hyp in enumerate(next_live):
            hyp.state = tuple(s[j] for s in state) if isinstance(state, tuple) else None
        live = next_live
        if finished:
            best_finished = max(h.score for h in finished)
            bound = max(h.logprob for h in live) / max_len
            if bound <= best_finished:
                break
    finished.sort(key=lambda h: -h.score)
    return finished


def greedy_search(stepper, max_len: int | None = None,
                  forced_prefix: Sequence[int] | None = None) -> Hypothesis:
    """Argmax decoding, one token at a time."""
    if max_len is None:
        max_len = default_max_len(stepper)
    prefix = _check_prefix(forced_prefix or [], stepper.vocab_size)
    state = stepper.initial_state()
    tokens: list[int] = []
    lp = 0.0
    prev = stepper.eos_id
    for t in range(max_len):
        logp, state = stepper.step(np.array([prev]), state)
        prev = prefix[t] if t < len(prefix) else int(np.argmax(logp[0]))
        lp += float(logp[0, prev])
        tokens.append(prev)
        if prev == stepper.eos_id:
            break
    return Hypothesis(tuple(tokens), lp, finished=True)


def prefix_ids(codes: Sequence[int], vocab: Vocabulary) -> list[int]:
    """Token ids for ``<c..> ... <eoc>`` from 0-based code values."""
    if vocab.eoc_id is None or vocab.num_codes == 0:
        raise ContractError("target vocabulary has no planner-code tokens")
    return [vocab.code_id(int(c)) for c in codes] + [vocab.eoc_id]


def validate_prefix(prefix: Sequence[int], vocab: Vocabulary) -> list[int]:
    prefix = [int(t) for t in prefix]
    if not prefix or prefix[-1] != vocab.eoc_id:
        raise ContractError("a forced prefix must end with <eoc>")
    for t in prefix[:-1]:
        if vocab.code_value(t) is None:
            raise ContractError(f"forced token id {t} is not a planner-code token")
    return prefix


def split_code_prefix(tokens: Sequence[str]) -> tuple[list[str], list[str]]:
    """``(code tokens before <eoc>, remaining tokens)``; for side-channel output."""
    tokens = list(tokens)
    codes = []
    i = 0
    while i < len(tokens) and is_code_token(tokens[i]):
        codes.append(tokens[i])
        i += 1
    return codes, strip_codes(tokens)


def translate(model, src_tokens: Sequence[str], beam_size: int = 5,
              forced_codes: Sequence[int] | None = None, max_len: int | None = None):
    """Translate one BPE-segmented source sentence.

    Returns ``(words, code_tokens)``: the BPE-joined output with planner
    tokens removed, and the code prefix the decoder emitted.
    """
    vocab = model.tgt_vocab
    src_ids = model.src_vocab.encode(src_tokens) or [model.src_vocab.eos_id]
    stepper = model.stepper(src_ids)
    prefix = None
    if forced_codes is not None:
        prefix = validate_prefix(prefix_ids(forced_codes, vocab), vocab)
    if max_len is None:
        max_len = default_max_len(stepper) + (len(prefix) if prefix else 0)
    hyps = beam_search(stepper, beam_size, max_len, prefix)
    ids = [t for t in hyps[0].tokens if t != vocab.eos_id]
    toks = vocab.decode(ids)
    codes, rest = split_code_prefix(toks)
    return join_bpe(rest), codes
