"""Attention-based LSTM translation model.

Two bidirectional LSTM encoder layers, two LSTM decoder layers with
key-value attention in the first one, and a residual sum of both decoder
layers before the output projection.  The same architecture serves the
baseline and the code-prefixed model; only the training targets differ.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from plnmt.errors import ContractError
from plnmt.numcore import ParamStore, Tape, Tensor, log_softmax, softmax
from plnmt.optim import NAG, PlateauAnnealer, clip_global_norm, nag_update  # noqa: F401
from plnmt.textpipe.vocab import Vocabulary

log = logging.getLogger(__name__)


@dataclass
class NmtConfig:
    hidden: int = 64
    embed: int | None = None
    dropout: float = 0.2
    lr: float = 0.25
    momentum: float = 0.9
    clip_norm: float = 5.0
    anneal_factor: float = 10.0
    anneal_patience: int = 500
    epochs: int = 10
    batch_size: int = 32
    max_steps: int | None = None
    valid_fraction: float = 0.05
    seed: int = 1

    def __post_init__(self):
        if self.embed is None:
            self.embed = self.hidden
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.hidden <= 0 or self.embed <= 0:
            raise ContractError("layer sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(config: NmtConfig, src_vocab_size: int, tgt_vocab_size: int,
                dtype=np.float32) -> ParamStore:
    H, E = config.hidden, config.embed
    p = ParamStore(config.seed, dtype)
    p.add("src_emb", (src_vocab_size, E), init="normal")
    p.add("tgt_emb", (tgt_vocab_size, E), init="normal")
    p.add_lstm("enc1f", E, H)
    p.add_lstm("enc1b", E, H)
    p.add_lstm("enc2f", 2 * H, H)
    p.add_lstm("enc2b", 2 * H, H)
    p.add_affine("init", 2 * H, 2 * H)
    p.add_affine("att.key", 2 * H, H)
    p.add_affine("att.value", 2 * H, H)
    p.add_affine("att.query", H, H)
    p.add_lstm("dec1", E + H, H)
    p.add_lstm("dec2", H, H)
    p.add_affine("out", H, tgt_vocab_size)
    return p


def pad_ids(seqs: Sequence[Sequence[int]], fill: int = 0):
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), fill, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def _zeros(tape, B, H):
    return tape.const(np.zeros((B, H)))


def encode_source_batch(tape: Tape, ids, mask, config: NmtConfig) -> Tensor:
    """Final-layer encoder states (batch, S, 2 * hidden)."""
    B, S = ids.shape
    if S == 0 or not mask[:, 0].all():
        raise ContractError("encode_source needs a non-empty token sequence")
    H = config.hidden
    full = bool(mask.all())
    layer = [tape.dropout(tape.embed(ids[:, t], "src_emb"), config.dropout) for t in range(S)]
    for name in ("enc1", "enc2"):
        h = c = _zeros(tape, B, H)
        fwd = []
        for t in range(S):
            h, c = tape.lstm_cell(layer[t], h, c, name + "f")
            fwd.append(h)
        h = c = _zeros(tape, B, H)
        bwd = [None] * S
        for t in range(S - 1, -1, -1):
            h, c = tape.lstm_cell(layer[t], h, c, name + "b", keep=None if full else mask[:, t])
            bwd[t] = h
        outs = [tape.concat([f, b]) for f, b in zip(fwd, bwd)]
        if name == "enc1":
            layer = [tape.dropout(o, config.dropout) for o in outs]
        else:
            layer = outs
    return tape.stack(layer, axis=1)


class EncoderMemory:
    """Attention keys/values and the decoder's initial state for a batch of sources."""

    def __init__(self, tape: Tape, ids, mask, config: NmtConfig):
        self.mask = mask
        self.states = encode_source_batch(tape, ids, mask, config)
        self.keys = tape.affine(self.states, "att.key")
        self.values = tape.affine(self.states, "att.value")
        init = tape.affine(tape.masked_mean(self.states, mask), "init")
        H = config.hidden
        B = ids.shape[0]
        self.initial = (tape.slice(init, 0, H), _zeros(tape, B, H),
                        tape.slice(init, H, 2 * H), _zeros(tape, B, H))


def attention_context(tape: Tape, query: Tensor, states: Tensor, mask=None):
    """Project ``states`` to keys and values, then attend with ``query``."""
    keys = tape.affine(states, "att.key")
    values = tape.affine(states, "att.value")
    return tape.attention(query, keys, values, mask)


def decoder_step_batch(tape: Tape, prev_ids, state, keys: Tensor, values: Tensor, mask,
                       config: NmtConfig):
    """One decoder step; returns ``(combined hidden, new state)``.

    The attention query is the incoming first-layer state; its context is fed
    with the previous token's embedding into the first layer.
    """
    h1, c1, h2, c2 = state
    query = tape.affine(h1, "att.query")
    ctx, _ = tape.attention(query, keys, values, mask)
    x = tape.concat([tape.dropout(tape.embed(prev_ids, "tgt_emb"), config.dropout), ctx])
    h1, c1 = tape.lstm_cell(x, h1, c1, "dec1")
    h2, c2 = tape.lstm_cell(tape.dropout(h1, config.dropout), h2, c2, "dec2")
    return tape.add(h1, h2), (h1, c1, h2, c2)


def output_logits(tape: Tape, combined: Tensor, config: NmtConfig) -> Tensor:
    return tape.affine(tape.dropout(combined, config.dropout), "out")


def teacher_forced_loss(tape: Tape, src, tgt, config: NmtConfig, eos_id: int) -> Tensor:
    """Cross-entropy of ``tgt + [eos]`` given ``src`` (both padded id batches).

    Token losses are summed per sentence and averaged over the batch.
    """
    src_ids, src_mask = src
    tgt_ids, tgt_mask = tgt
    B, T = tgt_ids.shape
    lengths = tgt_mask.sum(axis=1)
    inputs = np.concatenate([np.full((B, 1), eos_id), tgt_ids], axis=1)
    targets = np.concatenate([tgt_ids, np.zeros((B, 1), dtype=np.int64)], axis=1)
    targets[np.arange(B), lengths] = eos_id
    tmask = np.concatenate([tgt_mask, np.zeros((B, 1), dtype=bool)], axis=1)
    tmask[np.arange(B), lengths] = True
    mem = EncoderMemory(tape, src_ids, src_mask, config)
    state = mem.initial
    outs = []
    for t in range(T + 1):
        comb, state = decoder_step_batch(tape, inputs[:, t], state, mem.keys, mem.values,
                                         src_mask, config)
        outs.append(comb)
    logits = output_logits(tape, tape.stack(outs, axis=1), config)
    weights = tmask / B
    return tape.cross_entropy(logits, targets, weights)


# ---------------------------------------------------------------------- single-example API

def encode_source(tokens: Sequence[int], params: ParamStore, config: NmtConfig) -> np.ndarray:
    if len(tokens) == 0:
        raise ContractError("encode_source needs a non-empty token sequence")
    ids, mask = pad_ids([list(tokens)])
    return encode_source_batch(Tape(params, record=False), ids, mask, config).value[0]


def decoder_step(prev_token: int, state, encoder_states, params: ParamStore, config: NmtConfig):
    """Distribution over the target vocabulary and the next state, single example.

    ``state`` is ``(h1, c1, h2, c2)`` as 1-D arrays; ``encoder_states`` is (S, 2H).
    """
    tape = Tape(params, record=False)
    states = Tensor(np.asarray(encoder_states)[None])
    keys = tape.affine(states, "att.key")
    values = tape.affine(states, "att.value")
    st = tuple(Tensor(np.asarray(s)[None]) for s in state)
    comb, new = decoder_step_batch(tape, np.array([prev_token]), st, keys, values, None, config)
    probs = softmax(output_logits(tape, comb, config).value[0])
    return probs, tuple(s.value[0] for s in new)


# ---------------------------------------------------------------------- model wrapper

@dataclass
class NmtModel:
    params: ParamStore
    config: NmtConfig
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    history: list[dict] = field(default_factory=list)

    def stepper(self, src_ids: Sequence[int]) -> "NmtStepper":
        return NmtStepper(self, src_ids)

    def loss_on(self, pairs, batch_size: int = 128) -> float:
        """Token-weighted mean loss with dropout off."""
        total, tokens = 0.0, 0
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start:start + batch_size]
            n_tok = sum(len(p[1]) + 1 for p in chunk)
            tape = Tape(self.params, record=False)
            loss = teacher_forced_loss(tape, pad_ids([p[0] for p in chunk]),
                                       pad_ids([p[1] for p in chunk]), self.config,
                                       self.tgt_vocab.eos_id)
            total += float(loss.value) * len(chunk)
            tokens += n_tok
        return total / max(tokens, 1)

    def greedy_batch(self, sources: Sequence[Sequence[int]], steps: int,
                     forced: Sequence[int] | None = None) -> np.ndarray:
        """Greedy ids (batch, steps) for many sources at once; no early stop."""
        tape = Tape(self.params, record=False)
        ids, mask = pad_ids(sources)
        mem = EncoderMemory(tape, ids, mask, self.config)
        state = mem.initial
        prev = np.full(len(sources), self.tgt_vocab.eos_id)
        out = np.zeros((len(sources), steps), dtype=np.int64)
        for t in range(steps):
            comb, state = decoder_step_batch(tape, prev, state, mem.keys, mem.values, mask,
                                             self.config)
            if forced is not None and t < len(forced):
                prev = np.full(len(sources), forced[t])
            else:
                prev = output_logits(tape, comb, self.config).value.argmax(axis=-1)
            out[:, t] = prev
        return out


class NmtStepper:
    """Step interface for :func:`plnmt.decode.beam_search` over one source sentence."""

    def __init__(self, model: NmtModel, src_ids: Sequence[int]):
        if len(src_ids) == 0:
            raise ContractError("cannot translate an empty source sentence")
        self.model = model
        self.config = model.config
        self.tape = Tape(model.params, record=False)
        ids, mask = pad_ids([list(src_ids)])
        self.memory = EncoderMemory(self.tape, ids, mask, self.config)
        self.vocab_size = len(model.tgt_vocab)
        self.eos_id = model.tgt_vocab.eos_id
        self.source_length = len(src_ids)

    def initial_state(self):
        return tuple(s.value for s in self.memory.initial)

    def step(self, prev_ids, state):
        B = len(prev_ids)
        keys = Tensor(np.repeat(self.memory.keys.value, B, axis=0))
        values = Tensor(np.repeat(self.memory.values.value, B, axis=0))
        st = tuple(Tensor(s) for s in state)
        comb, new = decoder_step_batch(self.tape, np.asarray(prev_ids), st, keys, values,
                                       None, self.config)
        logits = output_logits(self.tape, comb, self.config).value
        return log_softmax(logits.astype(np.float64), axis=-1), tuple(s.value for s in new)

    @staticmethod
    def select(state, rows):
        return tuple(s[rows] for s in state)


def encode_pairs(src_vocab: Vocabulary, tgt_vocab: Vocabulary, sources, targets):
    pairs = []
    for s, t in zip(sources, targets):
        src = src_vocab.encode(s) or [src_vocab.eos_id]
        pairs.append((src, tgt_vocab.encode(t)))
    return pairs


def make_batches(pairs, batch_size: int, rng) -> list[list[int]]:
    """Shuffle, bucket by target length, then shuffle batch order."""
    order = rng.permutation(len(pairs))
    order = sorted(order, key=lambda i: len(pairs[i][1]))
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def train_nmt(pairs, model: NmtModel, valid_pairs=None, progress=None) -> NmtModel:
    """Teacher-forced NAG training with plateau annealing.

    ``pairs`` are (source ids, target ids) without the end token.  The
    parameters with the lowest validation loss (checked once per epoch) are
    kept.  Each optimisation step appends its loss and learning rate to
    ``model.history``.
    """
    config = model.config
    if not pairs:
        raise ContractError("empty training set")
    rng = np.random.default_rng(config.seed)
    if valid_pairs is None:
        order = rng.permutation(len(pairs))
        n_valid = int(round(len(pairs) * config.valid_fraction))
        if 0 < n_valid < len(pairs):
            valid_pairs = [pairs[i] for i in order[:n_valid]]
            pairs = [pairs[i] for i in order[n_valid:]]
        else:
            valid_pairs = pairs
    eos = model.tgt_vocab.eos_id
    opt = NAG(model.params, config.lr, config.momentum, config.clip_norm)
    annealer = PlateauAnnealer(config.lr, config.anneal_factor, config.anneal_patience)
    best_loss = model.loss_on(valid_pairs)
    best = model.params.copy()
    step = 0
    for epoch in range(1, config.epochs + 1):
        for batch in make_batches(pairs, config.batch_size, rng):
            tape = Tape(opt.lookahead(), train=True, rng=rng)
            loss = teacher_forced_loss(tape, pad_ids([pairs[i][0] for i in batch]),
                                       pad_ids([pairs[i][1] for i in batch]), config, eos)
            grads = tape.backward(loss)
            gnorm = opt.step(grads)
            step += 1
            value = float(loss.value)
            model.history.append({"step": step, "epoch": epoch, "loss": value,
                                  "lr": opt.lr, "grad_norm": gnorm})
            opt.lr = annealer.step(value)
            if config.max_steps is not None and step >= config.max_steps:
                break
        valid_loss = model.loss_on(valid_pairs)
        model.history.append({"step": step, "epoch": epoch, "valid_loss": valid_loss})
        log.info("nmt epoch %d step %d valid %.4f lr %g", epoch, step, valid_loss, opt.lr)
        if progress is not None:
            progress(model.history[-1])
        if valid_loss < best_loss:
            best_loss = valid_loss
            best = model.params.copy()
        if config.max_steps is not None and step >= config.max_steps:
            break
    model.params = best
    return model
