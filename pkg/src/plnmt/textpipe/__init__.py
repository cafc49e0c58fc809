from plnmt.textpipe.bpe import BpeModel, join_bpe, learn_bpe
from plnmt.textpipe.corpus import (
    SentenceRecord, augment_targets_with_codes, code_prefix, load_parallel_corpus,
    read_lines, strip_codes, tokenize, write_lines,
)
from plnmt.textpipe.vocab import (
    EOC, EOS, PAD, UNK, Vocabulary, build_vocab, code_token, is_code_token, is_eoc,
    is_reserved_token, parse_code_token,
)


def apply_bpe(model: BpeModel, tokens):
    return model.apply(tokens)


__all__ = [
    "BpeModel", "EOC", "EOS", "PAD", "SentenceRecord", "UNK", "Vocabulary",
    "apply_bpe", "augment_targets_with_codes", "build_vocab", "code_prefix", "code_token",
    "is_code_token", "is_eoc", "is_reserved_token", "join_bpe", "learn_bpe",
    "load_parallel_corpus", "parse_code_token", "read_lines", "strip_codes", "tokenize",
    "write_lines",
]
