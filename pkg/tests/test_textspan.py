import unicodedata

import pytest
from hypothesis import given, strategies as st

from haludiag.textspan import (
    SentenceSpan,
    containment_hit,
    load_abbreviations,
    normalize,
    split_sentences,
    verbatim_fraction,
)

text_strategy = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=120
)


class TestNormalize:
    def test_collapses_whitespace(self):
        assert normalize("  a \n b ") == "a b"

    def test_idempotent_simple(self):
        assert normalize("a b") == "a b"

    def test_composes_unicode(self):
        # Decomposed e + combining acute matches the reference composed form.
        decomposed = "caf" + "é"
        assert normalize(decomposed) == unicodedata.normalize("NFC", decomposed)
        assert normalize(decomposed) == "café"

    @given(text_strategy)
    def test_idempotent(self, text):
        once = normalize(text)
        assert normalize(once) == once


class TestSplitSentences:
    def test_two_sentences(self):
        spans = split_sentences("A cat. A dog.")
        assert [s.text for s in spans] == ["A cat.", "A dog."]

    def test_empty_input(self):
        assert split_sentences("") == []

    def test_whitespace_only(self):
        assert split_sentences("  \n\t ") == []

    def test_abbreviation_not_split(self):
        spans = split_sentences("Dr. Smith arrived. He left.")
        assert [s.text for s in spans] == ["Dr. Smith arrived.", "He left."]

    def test_multi_dot_abbreviation(self):
        spans = split_sentences("See e.g. The example. Then stop.")
        assert len(spans) == 2

    def test_single_initial(self):
        spans = split_sentences("J. Smith spoke. He left.")
        assert [s.text for s in spans] == ["J. Smith spoke.", "He left."]

    def test_fullwidth_terminators(self):
        spans = split_sentences("第一句。第二句。")
        assert len(spans) == 2

    def test_lowercase_continuation_not_split(self):
        spans = split_sentences("It cost 3.5 dollars. then he left.")
        assert len(spans) == 1

    def test_offsets_reproduce_raw_sentences(self):
        text = "Dr. Smith arrived.\n  He left!  Then  what?"
        spans = split_sentences(text)
        for span in spans:
            raw = text[span.start : span.end]
            assert normalize(raw) == span.text
            assert span.length == len(span.text)

    def test_spans_ordered_and_non_overlapping(self):
        text = "One thing. Two things! Three things? Four."
        spans = split_sentences(text)
        for earlier, later in zip(spans, spans[1:]):
            assert earlier.end <= later.start

    def test_gaps_are_whitespace(self):
        text = "First part. Second part.\n\nThird part."
        spans = split_sentences(text)
        pieces = []
        cursor = 0
        for span in spans:
            gap = text[cursor : span.start]
            assert gap.strip() == ""
            pieces.append(text[span.start : span.end])
            cursor = span.end
        assert text[cursor:].strip() == ""
        assert "".join(text.split()) == "".join("".join(p.split()) for p in pieces)

    @given(text_strategy)
    def test_offset_faithful_on_arbitrary_text(self, text):
        spans = split_sentences(text)
        cursor = 0
        for span in spans:
            assert 0 <= span.start < span.end <= len(text)
            assert span.start >= cursor
            assert text[cursor : span.start].strip() == ""
            assert span.text == normalize(text[span.start : span.end])
            cursor = span.end
        assert text[cursor:].strip() == ""

    @given(text_strategy)
    def test_deterministic(self, text):
        assert split_sentences(text) == split_sentences(text)

    def test_custom_abbreviations(self, tmp_path):
        data = tmp_path / "abbrev.txt"
        data.write_text("zzz.\n# comment line\n", encoding="utf-8")
        abbrevs = load_abbreviations(data)
        assert "zzz." in abbrevs
        assert split_sentences("The zzz. Goes on.", abbrevs)[0].text == "The zzz. Goes on."

    def test_span_invariants_enforced(self):
        with pytest.raises(ValueError):
            SentenceSpan(text="x", start=3, end=3)
        with pytest.raises(ValueError):
            SentenceSpan(text="", start=0, end=1)


class TestContainment:
    def test_substring(self):
        assert containment_hit("the cat", "the cat sat") is True

    def test_reflexive(self):
        assert containment_hit("abc", "abc") is True

    def test_disjoint(self):
        assert containment_hit("dog", "the cat sat") is False

    def test_empty_never_hits(self):
        assert containment_hit("", "abc") is False
        assert containment_hit("  ", "abc") is False

    def test_whitespace_insensitive(self):
        assert containment_hit("the  cat", "a the cat b") is True

    def test_case_sensitive(self):
        assert containment_hit("The cat", "the cat sat") is False

    @given(text_strategy, text_strategy)
    def test_symmetric(self, a, b):
        assert containment_hit(a, b) == containment_hit(b, a)

    @given(text_strategy)
    def test_reflexive_nonempty(self, s):
        if normalize(s):
            assert containment_hit(s, s) is True


class TestVerbatimFraction:
    def test_all_contained(self):
        assert verbatim_fraction(["b c"], "a b c d") == 1.0

    def test_half(self):
        assert verbatim_fraction(["b c", "zz"], "a b c d") == 0.5

    def test_empty_list_vacuous(self):
        assert verbatim_fraction([], "a b c d") == 1.0

    def test_raw_matching_not_normalized(self):
        # Double space breaks a raw match even though normalization would hit.
        assert verbatim_fraction(["a  b"], "a b c") == 0.0

    def test_monotone_under_non_substring_append(self):
        spans = ["b c"]
        before = verbatim_fraction(spans, "a b c d")
        after = verbatim_fraction(spans + ["zzz"], "a b c d")
        assert after <= before
