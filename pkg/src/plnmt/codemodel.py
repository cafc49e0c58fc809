"""Planner-code learning: a tag-sequence autoencoder with a discrete bottleneck.

The simplified tag sequence is read right-to-left by an LSTM whose first
state is mapped to ``N`` logit vectors of size ``K``.  Gumbel-Softmax turns
them into (near) one-hot codes.  A decoder LSTM, initialised from an affine
map of the concatenated codes plus the final state of a right-to-left LSTM
over the source sentence, reconstructs the tag sequence with teacher forcing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from plnmt.errors import ContractError
from plnmt.numcore import ParamStore, Tape, Tensor
from plnmt.optim import NAG
from plnmt.structann import ALPHABET, simplify_tags
from plnmt.textpipe.corpus import SentenceRecord
from plnmt.textpipe.vocab import Vocabulary

log = logging.getLogger(__name__)

TAGS = ("<s>", "</s>") + ALPHABET
TAG_BOS, TAG_EOS = 0, 1
TAG_IDS = {t: i for i, t in enumerate(TAGS)}


@dataclass
class CodeConfig:
    n: int = 2               # codes per sentence
    k: int = 4               # code alphabet size
    hidden: int = 256
    embed: int | None = None  # defaults to hidden
    tau: float = 1.0
    tau_final: float | None = None  # soft mode only: linear anneal over epochs
    hard: bool = True
    epochs: int = 50
    lr: float = 0.25
    momentum: float = 0.9
    clip_norm: float = 5.0
    batch_size: int = 32
    valid_fraction: float = 0.05
    seed: int = 1

    def __post_init__(self):
        if self.n < 1 or self.k < 2:
            raise ContractError(f"need N >= 1 and K >= 2, got N={self.n}, K={self.k}")
        if self.embed is None:
            self.embed = self.hidden

    @property
    def capacity_bits(self) -> float:
        return self.n * math.log2(self.k)

    def to_dict(self) -> dict:
        return asdict(self)


def tag_ids(tags: Sequence[str]) -> list[int]:
    try:
        return [TAG_IDS[t] for t in tags]
    except KeyError as exc:
        raise ContractError(f"tag {exc.args[0]!r} is not in the simplified alphabet") from None


def init_params(config: CodeConfig, src_vocab_size: int, dtype=np.float64) -> ParamStore:
    H, E, NK = config.hidden, config.embed, config.n * config.k
    p = ParamStore(config.seed, dtype)
    p.add("tag_emb", (len(TAGS), E))
    p.add("src_emb", (src_vocab_size, E))
    p.add_lstm("s", E, H)        # right-to-left over tags
    p.add_affine("enc", H, NK)
    p.add_lstm("x", E, H)        # right-to-left over source
    p.add_affine("dec", NK, H)
    p.add_lstm("h", E, H)        # left-to-right tag decoder
    p.add_affine("out", H, len(TAGS))
    return p


def pad_batch(seqs: Sequence[Sequence[int]], fill: int):
    """(ids, mask) arrays of shape (batch, max_len)."""
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), fill, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def _zeros(tape: Tape, batch: int, width: int) -> Tensor:
    return tape.const(np.zeros((batch, width)))


def run_backward_lstm(tape: Tape, ids, mask, emb: str, cell: str, hidden: int) -> Tensor:
    """Right-to-left LSTM over padded sequences; returns the state at position 1."""
    B, T = ids.shape
    h = c = _zeros(tape, B, hidden)
    full = mask.all()
    for t in range(T - 1, -1, -1):
        x = tape.embed(ids[:, t], emb)
        h, c = tape.lstm_cell(x, h, c, cell, keep=None if full else mask[:, t])
    return h


def encode_structure_batch(tape: Tape, tag_batch, config: CodeConfig) -> Tensor:
    ids, mask = tag_batch
    if ids.shape[1] == 0 or not mask.any(axis=1).all():
        raise ContractError("encode_structure needs a non-empty tag sequence")
    h1 = run_backward_lstm(tape, ids, mask, "tag_emb", "s", config.hidden)
    logits = tape.affine(h1, "enc")
    return tape.reshape(logits, (ids.shape[0], config.n, config.k))


def condition_decoder_batch(tape: Tape, src_batch, codes: Tensor, config: CodeConfig) -> Tensor:
    ids, mask = src_batch
    if ids.shape[1] == 0 or not mask.any(axis=1).all():
        raise ContractError("condition_decoder needs a non-empty source sentence")
    B = ids.shape[0]
    shape = codes.value.shape
    if shape[1:] != (config.n, config.k) and shape[1:] != (config.n * config.k,):
        raise ContractError(f"expected {config.n} code vectors of size {config.k}, "
                            f"got shape {shape}")
    flat = tape.reshape(codes, (B, config.n * config.k))
    s1 = run_backward_lstm(tape, ids, mask, "src_emb", "x", config.hidden)
    return tape.add(tape.affine(flat, "dec"), s1)


def reconstruct_batch(tape: Tape, tag_batch, h0: Tensor, config: CodeConfig):
    """Teacher-forced tag decoder.

    Returns ``(loss, logits)``: the loss is the per-sentence mean token
    cross-entropy (end tag included) averaged over the batch; logits are
    (batch, T + 1, |tags|).
    """
    ids, mask = tag_batch
    B, T = ids.shape
    lengths = mask.sum(axis=1)
    inputs = np.concatenate([np.full((B, 1), TAG_BOS), ids], axis=1)
    targets = np.concatenate([ids, np.full((B, 1), TAG_EOS)], axis=1)
    targets[np.arange(B), lengths] = TAG_EOS
    tmask = np.concatenate([mask, np.zeros((B, 1), dtype=bool)], axis=1)
    tmask[np.arange(B), lengths] = True
    h, c = h0, _zeros(tape, B, config.hidden)
    states = []
    for t in range(T + 1):
        x = tape.embed(inputs[:, t], "tag_emb")
        h, c = tape.lstm_cell(x, h, c, "h")
        states.append(h)
    logits = tape.affine(tape.stack(states, axis=1), "out")
    weights = tmask / (lengths + 1)[:, None] / B
    return tape.cross_entropy(logits, targets, weights), logits


def batch_loss(tape: Tape, src_batch, tag_batch, config: CodeConfig, tau=None,
               hard=None, noise=None, deterministic=False) -> Tensor:
    """Full objective for one batch.

    ``deterministic`` replaces the Gumbel sample by the exact one-hot argmax
    code, which is what extraction and validation use.
    """
    logits = encode_structure_batch(tape, tag_batch, config)
    if deterministic:
        codes = tape.gumbel_softmax(logits, 1.0, hard=True, noise=np.zeros_like(logits.value))
    else:
        codes = tape.gumbel_softmax(logits, config.tau if tau is None else tau,
                                    hard=config.hard if hard is None else hard, noise=noise)
    h0 = condition_decoder_batch(tape, src_batch, codes, config)
    loss, _ = reconstruct_batch(tape, tag_batch, h0, config)
    return loss


# ---------------------------------------------------------------------- single-example API

def gumbel_softmax(logits, tau: float, rng, hard: bool = False, noise=None) -> np.ndarray:
    """Sample ``softmax((logits + g) / tau)`` with Gumbel noise ``g`` over the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    tape = Tape(ParamStore(dtype=np.float64), rng=rng, record=False)
    return tape.gumbel_softmax(Tensor(logits), tau, hard=hard, noise=noise).value


def encode_structure(tags: Sequence[str], params: ParamStore, config: CodeConfig) -> np.ndarray:
    """Encoder logits (N, K) for one simplified tag sequence."""
    if not tags:
        raise ContractError("encode_structure needs a non-empty tag sequence")
    tape = Tape(params, record=False)
    batch = pad_batch([tag_ids(tags)], TAG_EOS)
    return encode_structure_batch(tape, batch, config).value[0]


def condition_decoder(source_ids: Sequence[int], codes, params: ParamStore,
                      config: CodeConfig) -> np.ndarray:
    """Initial decoder state from source ids and N one-hot code vectors."""
    codes = np.asarray(codes, dtype=params.dtype)
    if codes.ndim != 2 or codes.shape != (config.n, config.k):
        raise ContractError(f"expected {config.n} code vectors of size {config.k}, got {codes.shape}")
    tape = Tape(params, record=False)
    src = pad_batch([list(source_ids)], 0)
    return condition_decoder_batch(tape, src, Tensor(codes[None]), config).value[0]


def reconstruct_tags(tags: Sequence[str], h0, params: ParamStore, config: CodeConfig):
    """``(loss, per-step tag distributions)`` for one sentence given its decoder init."""
    from plnmt.numcore import softmax
    tape = Tape(params, record=False)
    batch = pad_batch([tag_ids(tags)], TAG_EOS)
    loss, logits = reconstruct_batch(tape, batch, Tensor(np.asarray(h0)[None]), config)
    return float(loss.value), softmax(logits.value[0], axis=-1)


def one_hot_codes(codes: Sequence[Sequence[int]], k: int, dtype=np.float64) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    out = np.zeros(codes.shape + (k,), dtype=dtype)
    np.put_along_axis(out, codes[..., None], 1.0, axis=-1)
    return out


# ---------------------------------------------------------------------- model wrapper

@dataclass
class CodeModel:
    params: ParamStore
    config: CodeConfig
    src_vocab: Vocabulary
    history: list[dict] = field(default_factory=list)

    def prepare(self, records: Sequence[SentenceRecord]):
        """Simplified tag ids and source ids per record (None for empty structures)."""
        out = []
        for i, rec in enumerate(records):
            if rec.target_tags is None:
                raise ContractError(f"record {i} has no target tags")
            simple = simplify_tags(rec.target_tags)
            src = self.src_vocab.encode(rec.source) or [self.src_vocab.eos_id]
            out.append((src, tag_ids(simple)) if simple else None)
        return out

    def extract(self, records: Sequence[SentenceRecord], batch_size: int = 256) -> list[tuple[int, ...]]:
        """Argmax codes from the encoder logits; no noise.  Empty structures get all zeros."""
        prepared = self.prepare(records)
        result: list[tuple[int, ...]] = [(0,) * self.config.n] * len(records)
        live = [i for i, p in enumerate(prepared) if p is not None]
        for start in range(0, len(live), batch_size):
            chunk = live[start:start + batch_size]
            tape = Tape(self.params, record=False)
            logits = encode_structure_batch(
                tape, pad_batch([prepared[i][1] for i in chunk], TAG_EOS), self.config).value
            for i, row in zip(chunk, logits.argmax(axis=-1)):
                result[i] = tuple(int(v) for v in row)
        return result

    def decode_tags(self, sources: Sequence[Sequence[int]], codes: Sequence[Sequence[int]],
                    max_steps: int = 64) -> list[list[str]]:
        """Greedy tag sequences given source ids and code assignments."""
        tape = Tape(self.params, record=False)
        onehot = Tensor(one_hot_codes(codes, self.config.k, self.params.dtype))
        h = condition_decoder_batch(tape, pad_batch(sources, 0), onehot, self.config)
        B = len(sources)
        c = _zeros(tape, B, self.config.hidden)
        prev = np.full(B, TAG_BOS)
        done = np.zeros(B, dtype=bool)
        outputs: list[list[str]] = [[] for _ in range(B)]
        for _ in range(max_steps):
            h, c = tape.lstm_cell(tape.embed(prev, "tag_emb"), h, c, "h")
            prev = tape.affine(h, "out").value.argmax(axis=-1)
            for b in np.flatnonzero(~done):
                if prev[b] == TAG_EOS:
                    done[b] = True
                else:
                    outputs[b].append(TAGS[prev[b]])
            if done.all():
                break
        return outputs

    def loss_on(self, pairs, batch_size: int = 256) -> float:
        """Mean deterministic-code reconstruction loss over (src, tags) pairs."""
        total = 0.0
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start:start + batch_size]
            tape = Tape(self.params, record=False)
            loss = batch_loss(tape, pad_batch([p[0] for p in chunk], 0),
                              pad_batch([p[1] for p in chunk], TAG_EOS), self.config,
                              deterministic=True)
            total += float(loss.value) * len(chunk)
        return total / max(len(pairs), 1)


def extract_codes(record: SentenceRecord, model: CodeModel) -> tuple[int, ...]:
    if record.target_tags is None:
        raise ContractError("record has no target tags")
    return model.extract([record])[0]


def split_validation(n: int, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_valid = int(round(n * fraction))
    if n_valid == 0 or n_valid >= n:
        # too small to hold anything out: validate on the training pairs
        return order, order
    return order[n_valid:], order[:n_valid]


def train_code_model(records: Sequence[SentenceRecord], config: CodeConfig,
                     src_vocab: Vocabulary, dtype=np.float32, params: ParamStore | None = None,
                     valid_records: Sequence[SentenceRecord] | None = None,
                     progress=None) -> CodeModel:
    """Train with NAG over shuffled minibatches; keep the best-validation parameters."""
    if params is None:
        params = init_params(config, len(src_vocab), dtype)
    model = CodeModel(params, config, src_vocab)
    pairs = [p for p in model.prepare(records) if p is not None]
    if not pairs:
        raise ContractError("no records with a non-empty simplified tag sequence")
    rng = np.random.default_rng(config.seed)
    if valid_records is not None:
        train_pairs = pairs
        valid_pairs = [p for p in model.prepare(valid_records) if p is not None] or pairs
    else:
        tr, va = split_validation(len(pairs), config.valid_fraction, rng)
        train_pairs = [pairs[i] for i in tr]
        valid_pairs = [pairs[i] for i in va]

    opt = NAG(params, config.lr, config.momentum, config.clip_norm)
    best_loss = model.loss_on(valid_pairs)
    best = params.copy()
    model.history.append({"epoch": 0, "train_loss": float("nan"), "valid_loss": best_loss,
                          "tau": config.tau})
    for epoch in range(1, config.epochs + 1):
        tau = config.tau
        if not config.hard and config.tau_final is not None and config.epochs > 1:
            tau = config.tau + (config.tau_final - config.tau) * (epoch - 1) / (config.epochs - 1)
        order = rng.permutation(len(train_pairs))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_pairs[i] for i in order[start:start + config.batch_size]]
            tape = Tape(opt.lookahead(), train=True, rng=rng)
            loss = batch_loss(tape, pad_batch([p[0] for p in chunk], 0),
                              pad_batch([p[1] for p in chunk], TAG_EOS), config, tau=tau)
            grads = tape.backward(loss)
            opt.step(grads)
            total += float(loss.value) * len(chunk)
            count += len(chunk)
        valid_loss = model.loss_on(valid_pairs)
        entry = {"epoch": epoch, "train_loss": total / count, "valid_loss": valid_loss, "tau": tau}
        model.history.append(entry)
        log.info("code model epoch %d train %.4f valid %.4f", epoch, entry["train_loss"], valid_loss)
        if progress is not None:
            progress(entry)
        if valid_loss < best_loss:
            best_loss = valid_loss
            best = params.copy()
    model.params = best
    return model
