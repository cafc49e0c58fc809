import io
import itertools

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from plnmt.structann import ALPHABET, coarse_tag, filter_stream, simplify_line, simplify_tags

PENN = ["CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS",
        "NNP", "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO",
        "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ",", ".",
        ":", "``", "''", "-LRB-", "NONE", "Vx", "n", "v"]


def two_pass_oracle(tags):
    """Filter-map every tag, then collapse runs with groupby."""
    mapped = []
    for t in tags:
        if t[:1] == "N":
            mapped.append("N")
        elif t[:1] == "V":
            mapped.append("V")
        elif t[:3] == "PRP":
            mapped.append("PRP")
        elif t == "," or t == ".":
            mapped.append(t)
    return [k for k, _ in itertools.groupby(mapped)]


def random_tag_strings(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield [PENN[i] for i in rng.integers(0, len(PENN), size=rng.integers(0, 25))]


class TestSimplify:
    def test_worked_example(self):
        assert simplify_line("PRP VBD DT NN IN DT NN .") == "PRP V N ."

    def test_empty(self):
        assert simplify_tags([]) == []
        assert simplify_line("") == ""

    def test_possessive_pronoun_maps_to_prp(self):
        assert coarse_tag("PRP$") == "PRP"
        assert simplify_tags(["PRP$", "NN"]) == ["PRP", "N"]

    def test_case_sensitive(self):
        assert simplify_tags(["nn", "vb"]) == []

    def test_runs_merge_across_deleted_tags(self):
        assert simplify_tags(["NN", "IN", "NNS"]) == ["N"]

    def test_two_pass_oracle(self):
        for tags in random_tag_strings(10_000, seed=0):
            assert simplify_tags(tags) == two_pass_oracle(tags)

    def test_closed_alphabet_and_no_repeats(self):
        for tags in random_tag_strings(10_000, seed=1):
            out = simplify_tags(tags)
            assert set(out) <= set(ALPHABET)
            assert all(a != b for a, b in zip(out, out[1:]))

    def test_idempotent(self):
        for tags in random_tag_strings(10_000, seed=2):
            once = simplify_tags(tags)
            assert simplify_tags(once) == once

    @given(st.lists(st.text(min_size=1, max_size=4).filter(lambda s: not s.isspace()), max_size=20))
    def test_arbitrary_tags(self, tags):
        assert simplify_tags(tags) == two_pass_oracle(tags)

    def test_filter_stream(self):
        out = io.StringIO()
        filter_stream(["PRP VBD DT NN IN DT NN .\n", "DT JJ NN , VBZ\n"], out)
        assert out.getvalue() == "PRP V N .\nN , V\n"
