import pytest

from kgan import corpus
from kgan.corpus import (
    Dataset,
    Instance,
    Vocabulary,
    build_vocab,
    dataset_stats,
    from_tsv,
    parse_semeval,
    parse_twitter,
    to_tsv,
    tokenize,
)
from kgan.errors import AlignmentError, FormatError, LabelError, ParseError

V2014_ONE = b"""<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="s1">
    <text>The food was good .</text>
    <aspectTerms>
      <aspectTerm term="food" polarity="positive" from="4" to="8"/>
    </aspectTerms>
  </sentence>
</sentences>
"""

V2015_ONE = b"""<?xml version="1.0" encoding="UTF-8"?>
<Reviews>
  <Review rid="r1">
    <sentences>
      <sentence id="r1:1">
        <text>Great pizza but slow delivery .</text>
        <Opinions>
          <Opinion target="pizza" category="FOOD#QUALITY" polarity="positive" from="6" to="11"/>
          <Opinion target="NULL" category="SERVICE#GENERAL" polarity="negative" from="0" to="0"/>
          <Opinion target="delivery" category="SERVICE#GENERAL" polarity="negative" from="21" to="29"/>
        </Opinions>
      </sentence>
    </sentences>
  </Review>
</Reviews>
"""


class TestTokenize:
    def test_punctuation_isolated(self):
        assert tokenize("Great food!") == ["great", "food", "!"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_collapse(self):
        assert tokenize("A  B") == ["a", "b"]

    def test_interior_punctuation(self):
        assert tokenize("don't stop") == ["don", "'", "t", "stop"]
        assert tokenize("wi-fi") == ["wi", "-", "fi"]

    def test_deterministic(self):
        text = "The  Wi-Fi (5GHz) WORKS!!"
        assert tokenize(text) == tokenize(text)


class TestParseSemeval:
    def test_hand_aligned_instance(self):
        insts = parse_semeval(V2014_ONE, "v2014")
        assert len(insts) == 1
        inst = insts[0]
        assert inst.tokens == ("the", "food", "was", "good", ".")
        assert (inst.aspect_start, inst.aspect_len, inst.polarity) == (1, 1, 0)

    def test_zero_sentences(self):
        assert parse_semeval(b"<sentences></sentences>", "v2014") == []

    def test_conflict_dropped(self):
        xml = V2014_ONE.replace(b'polarity="positive"', b'polarity="conflict"')
        assert parse_semeval(xml, "v2014") == []

    def test_unknown_polarity(self):
        xml = V2014_ONE.replace(b'polarity="positive"', b'polarity="meh"')
        with pytest.raises(LabelError):
            parse_semeval(xml, "v2014")

    def test_malformed_xml_reports_line(self):
        with pytest.raises(ParseError, match="line"):
            parse_semeval(b"<sentences><sentence></sentences>", "v2014")

    def test_unalignable_span_names_sentence(self):
        xml = V2014_ONE.replace(b'from="4" to="8"', b'from="5" to="8"')
        with pytest.raises(AlignmentError, match="s1"):
            parse_semeval(xml, "v2014")

    def test_v2015_null_target_dropped(self):
        insts = parse_semeval(V2015_ONE, "v2015_16")
        assert [i.aspect_tokens for i in insts] == [("pizza",), ("delivery",)]
        assert [i.polarity for i in insts] == [0, 2]

    def test_duplicate_span_same_polarity_collapses(self):
        dup = V2015_ONE.replace(
            b'<Opinion target="delivery" category="SERVICE#GENERAL" polarity="negative" from="21" to="29"/>',
            b'<Opinion target="pizza" category="FOOD#PRICES" polarity="positive" from="6" to="11"/>',
        )
        insts = parse_semeval(dup, "v2015_16")
        assert len(insts) == 1

    def test_contradictory_span_dropped(self):
        dup = V2015_ONE.replace(
            b'<Opinion target="delivery" category="SERVICE#GENERAL" polarity="negative" from="21" to="29"/>',
            b'<Opinion target="pizza" category="FOOD#PRICES" polarity="negative" from="6" to="11"/>',
        )
        assert parse_semeval(dup, "v2015_16") == []

    def test_span_covering_punctuation(self):
        xml = b"""<sentences><sentence id="s2">
          <text>The wi-fi died .</text>
          <aspectTerms><aspectTerm term="wi-fi" polarity="negative" from="4" to="9"/></aspectTerms>
        </sentence></sentences>"""
        (inst,) = parse_semeval(xml, "v2014")
        assert inst.aspect_tokens == ("wi", "-", "fi")
        assert inst.polarity == 2


class TestParseTwitter:
    def test_hand_substitution(self):
        raw = "i love $T$ !\nmy phone\n1\n".encode()
        (inst,) = parse_twitter(raw)
        assert inst.tokens == ("i", "love", "my", "phone", "!")
        assert (inst.aspect_start, inst.aspect_len, inst.polarity) == (2, 2, 0)

    def test_empty_file(self):
        assert parse_twitter(b"") == []

    def test_truncated_record(self):
        with pytest.raises(FormatError, match="multiple of 3"):
            parse_twitter(b"only $T$ line\nphone\n")

    def test_unknown_label(self):
        with pytest.raises(LabelError, match="record 0"):
            parse_twitter(b"x $T$ y\nphone\n2\n")

    def test_label_mapping(self):
        raw = "a $T$ b\nq\n1\nc $T$ d\nq\n0\ne $T$ f\nq\n-1\n".encode()
        assert [i.polarity for i in parse_twitter(raw)] == [0, 1, 2]


class TestTsvRoundTrip:
    def test_round_trip_identity(self):
        insts = parse_semeval(V2014_ONE, "v2014") + parse_twitter(b"i love $T$ !\nmy phone\n1\n")
        assert from_tsv(to_tsv(insts)) == insts

    def test_empty(self):
        assert to_tsv([]) == ""
        assert from_tsv("") == []

    def test_bad_field_count(self):
        with pytest.raises(FormatError):
            from_tsv("a b\t0\t1\t0\n")


class TestVocabulary:
    def test_minimal(self):
        ds = Dataset("custom", "train", [Instance(("x",), 0, 1, 0, "i")])
        vocab = build_vocab([ds])
        assert vocab.token_to_index == {"<pad>": 0, "<unk>": 1, "x": 2}

    def test_idempotent(self):
        ds = Dataset("custom", "train", [Instance(("a", "b"), 0, 1, 0, "i")])
        assert build_vocab([ds, ds]).token_to_index == build_vocab([ds]).token_to_index

    def test_unk_fallback(self):
        vocab = Vocabulary(["a"])
        assert vocab.indices(["a", "zz"]) == [2, 1]

    def test_every_token_indexed_geq_2(self, world):
        vocab = world["vocab"]
        for ds in (world["train_ds"], world["test_ds"]):
            for inst in ds.instances:
                assert all(vocab.index(t) >= 2 for t in inst.tokens)


class TestStats:
    def test_counts(self):
        insts = [
            Instance(("a",), 0, 1, 0, "1"),
            Instance(("b",), 0, 1, 0, "2"),
            Instance(("c",), 0, 1, 2, "3"),
            Instance(("d",), 0, 1, 1, "4"),
        ]
        counts = dataset_stats(Dataset("custom", "train", insts))
        assert counts.as_tuple() == (2, 1, 1)

    def test_empty(self):
        assert dataset_stats(Dataset("custom", "train", [])).as_tuple() == (0, 0, 0)

    def test_expected_registry_totals(self):
        # split totals follow the per-class sums of the published table
        assert corpus.EXPECTED_SPLIT_COUNTS[("laptop14", "train")].total == 980 + 858 + 454
        assert corpus.EXPECTED_SPLIT_COUNTS[("twitter", "train")].total == 1567 + 1563 + 3127


class TestInstanceInvariants:
    def test_polarity_range(self):
        with pytest.raises(LabelError):
            Instance(("a",), 0, 1, 3, "bad")

    def test_span_bounds(self):
        with pytest.raises(FormatError):
            Instance(("a", "b"), 1, 2, 0, "bad")

    def test_empty_tokens(self):
        with pytest.raises(FormatError):
            Instance((), 0, 1, 0, "bad")

    def test_aspect_len_positive(self):
        with pytest.raises(FormatError):
            Instance(("a",), 0, 0, 0, "bad")
