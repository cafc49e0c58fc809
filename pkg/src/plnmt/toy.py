"""Template-grammar parallel corpus whose target word order is a latent coin flip.

Each source pattern has a fixed word order; its translation is realised in
one of several orderings chosen uniformly at random, so only a planner code
can tell a model which ordering to produce.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from plnmt.textpipe.corpus import write_lines

NOUNS = {"gato": "cat", "perro": "dog", "pajaro": "bird", "raton": "mouse",
         "caballo": "horse", "vaca": "cow", "leon": "lion", "oso": "bear"}
PRONOUNS = {"el": ("he", "him"), "ella": ("she", "her"), "ellos": ("they", "them")}
TRANSITIVE = {"vio": ("saw", "seen"), "comio": ("ate", "eaten"), "siguio": ("followed", "followed"),
              "encontro": ("found", "found"), "mordio": ("bit", "bitten"),
              "llamo": ("called", "called")}
INTRANSITIVE = {"durmio": "slept", "corrio": "ran", "salto": "jumped", "llego": "arrived"}

LEXICON_TAGS = {"the": "DT", "it": "PRP", "was": "VBD", "by": "IN", "that": "WDT",
                "yesterday": "RB", ".": "."}
LEXICON_TAGS.update({w: "NN" for w in NOUNS.values()})
for subj, obj in PRONOUNS.values():
    LEXICON_TAGS[subj] = LEXICON_TAGS[obj] = "PRP"
for past, part in TRANSITIVE.values():
    LEXICON_TAGS[past] = "VBD"
    LEXICON_TAGS.setdefault(part, "VBN")
LEXICON_TAGS.update({w: "VBD" for w in INTRANSITIVE.values()})


@dataclass(frozen=True)
class ToyExample:
    source: tuple[str, ...]
    target: tuple[str, ...]
    tags: tuple[str, ...]
    label: int       # which target ordering was drawn
    pattern: str


def tag_words(words) -> list[str]:
    """POS tags from the toy lexicon; unknown words get ``X``."""
    return [LEXICON_TAGS.get(w, "X") for w in words]


def _transitive(rng, ordering: int):
    pron = str(rng.choice(sorted(PRONOUNS)))
    verb = str(rng.choice(sorted(TRANSITIVE)))
    noun = str(rng.choice(sorted(NOUNS)))
    subj, obj = PRONOUNS[pron]
    past, part = TRANSITIVE[verb]
    n = NOUNS[noun]
    source = [pron, verb, noun]
    realisations = [
        ["the", n, subj, past],                 # N PRP V .
        [subj, past, "the", n],                 # PRP V N .
        ["the", n, "was", part, "by", obj],     # N V PRP .
        ["it", "was", "the", n, subj, past],    # PRP V N PRP V .
    ]
    return source, realisations[ordering]


def _intransitive(rng, ordering: int):
    noun = str(rng.choice(sorted(NOUNS)))
    verb = str(rng.choice(sorted(INTRANSITIVE)))
    n, v = NOUNS[noun], INTRANSITIVE[verb]
    realisations = [
        ["the", n, v],                          # N V .
        ["it", "was", "the", n, "that", v],     # PRP V N V .
    ]
    return [noun, verb], realisations[ordering]


def generate(count: int, orderings: int = 2, seed: int = 0,
             patterns: tuple[str, ...] = ("transitive", "intransitive")) -> list[ToyExample]:
    """``count`` sentence pairs; the ordering index is drawn uniformly per pair."""
    if orderings not in (2, 4):
        raise ValueError("orderings must be 2 or 4")
    if orderings == 4:
        patterns = ("transitive",)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        pattern = patterns[int(rng.integers(len(patterns)))]
        label = int(rng.integers(orderings))
        maker = _transitive if pattern == "transitive" else _intransitive
        source, target = maker(rng, label)
        if rng.random() < 0.3:
            source = source + ["ayer"]
            target = target + ["yesterday"]
        target = target + ["."]
        out.append(ToyExample(tuple(source), tuple(target), tuple(tag_words(target)),
                              label, pattern))
    return out


def write_corpus(examples, prefix) -> None:
    """Write ``prefix.src``, ``prefix.tgt``, ``prefix.tgt.pos`` and ``prefix.label``."""
    write_lines(f"{prefix}.src", (" ".join(e.source) for e in examples))
    write_lines(f"{prefix}.tgt", (" ".join(e.target) for e in examples))
    write_lines(f"{prefix}.tgt.pos", (" ".join(e.tags) for e in examples))
    write_lines(f"{prefix}.label", (str(e.label) for e in examples))


def orderings_for(source) -> list[list[str]]:
    """Simplified structures the generator can produce for this source."""
    from plnmt.structann import simplify_tags
    transitive = any(w in TRANSITIVE for w in source)
    if transitive:
        return [simplify_tags(t.split()) for t in
                ("DT NN PRP VBD .", "PRP VBD DT NN .", "DT NN VBD VBN IN PRP .",
                 "PRP VBD DT NN PRP VBD .")]
    return [simplify_tags(t.split()) for t in ("DT NN VBD .", "PRP VBD DT NN WDT VBD .")]
