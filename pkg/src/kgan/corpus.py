"""Benchmark corpus loading: SemEval XML, Twitter 3-line records, TSV interchange.

Every loader produces :class:`Instance` objects with 0-based token-level aspect
spans and the polarity encoding positive=0 / neutral=1 / negative=2.
"""

from __future__ import annotations

import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable

from .errors import AlignmentError, DataError, FormatError, LabelError, ParseError

POSITIVE, NEUTRAL, NEGATIVE = 0, 1, 2
POLARITY_NAMES = {POSITIVE: "positive", NEUTRAL: "neutral", NEGATIVE: "negative"}
_POLARITY_IDS = {v: k for k, v in POLARITY_NAMES.items()}

PAD, UNK = "<pad>", "<unk>"

DATASET_NAMES = ("laptop14", "restaurant14", "twitter", "restaurant15", "restaurant16")
SPLITS = ("train", "test")

SEMEVAL_V2014 = "v2014"
SEMEVAL_V2015_16 = "v2015_16"


@dataclass(frozen=True)
class Instance:
    """One (sentence, aspect) pair with its gold polarity."""

    tokens: tuple[str, ...]
    aspect_start: int
    aspect_len: int
    polarity: int
    id: str

    def __post_init__(self):
        if not self.tokens or any(not t for t in self.tokens):
            raise FormatError(f"instance {self.id!r}: empty token list or empty token")
        if self.aspect_len < 1:
            raise FormatError(f"instance {self.id!r}: aspect_len must be >= 1")
        if not (0 <= self.aspect_start and self.aspect_start + self.aspect_len <= len(self.tokens)):
            raise FormatError(
                f"instance {self.id!r}: aspect span [{self.aspect_start}, "
                f"{self.aspect_start + self.aspect_len}) outside sentence of "
                f"length {len(self.tokens)}"
            )
        if self.polarity not in POLARITY_NAMES:
            raise LabelError(f"instance {self.id!r}: polarity {self.polarity!r} not in {{0,1,2}}")

    @property
    def aspect_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.aspect_start : self.aspect_start + self.aspect_len]


@dataclass
class Dataset:
    name: str
    split: str
    instances: list[Instance] = field(default_factory=list)

    def __len__(self):
        return len(self.instances)


@dataclass(frozen=True)
class ClassCounts:
    positive: int
    negative: int
    neutral: int

    @property
    def total(self) -> int:
        return self.positive + self.negative + self.neutral

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.positive, self.negative, self.neutral)


# Published per-class (positive, negative, neutral) counts for the five
# benchmark splits; cmd_prepare verifies loaded data against these.
EXPECTED_SPLIT_COUNTS: dict[tuple[str, str], ClassCounts] = {
    ("laptop14", "train"): ClassCounts(980, 858, 454),
    ("laptop14", "test"): ClassCounts(340, 128, 171),
    ("restaurant14", "train"): ClassCounts(2159, 800, 632),
    ("restaurant14", "test"): ClassCounts(730, 195, 196),
    ("twitter", "train"): ClassCounts(1567, 1563, 3127),
    ("twitter", "test"): ClassCounts(174, 174, 346),
    ("restaurant15", "train"): ClassCounts(912, 256, 36),
    ("restaurant15", "test"): ClassCounts(326, 182, 34),
    ("restaurant16", "train"): ClassCounts(1240, 439, 69),
    ("restaurant16", "test"): ClassCounts(469, 117, 30),
}


def _is_breaking(ch: str) -> bool:
    # punctuation and symbol characters become standalone tokens
    cat = unicodedata.category(ch)
    return cat.startswith("P") or cat.startswith("S")


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Lowercased tokens with their (start, end) character offsets.

    Splits on whitespace and isolates every punctuation/symbol character as its
    own token. Deterministic; offsets refer to the original string.
    """
    spans: list[tuple[int, int]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                spans.append((start, i))
                start = None
        elif _is_breaking(ch):
            if start is not None:
                spans.append((start, i))
                start = None
            spans.append((i, i + 1))
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(text)))
    return [(text[a:b].lower(), a, b) for a, b in spans]


def tokenize(text: str) -> list[str]:
    return [tok for tok, _, _ in tokenize_with_spans(text)]


def _align_span(text: str, char_from: int, char_to: int, sent_id: str) -> tuple[int, int, list[str]]:
    """Map a character span to a contiguous token span.

    Returns (aspect_start, aspect_len, tokens). The span must land exactly on
    token boundaries; when punctuation isolation breaks that, alignment is
    retried against raw whitespace tokens and re-mapped. Otherwise raises
    AlignmentError naming the sentence.
    """
    # trim whitespace that annotators occasionally include in the offsets
    while char_from < char_to and text[char_from].isspace():
        char_from += 1
    while char_to > char_from and text[char_to - 1].isspace():
        char_to -= 1

    toks = tokenize_with_spans(text)
    tokens = [t for t, _, _ in toks]
    starts = {a: i for i, (_, a, _) in enumerate(toks)}
    ends = {b: i for i, (_, _, b) in enumerate(toks)}
    if char_from in starts and char_to in ends and starts[char_from] <= ends[char_to]:
        i, j = starts[char_from], ends[char_to]
        return i, j - i + 1, tokens

    # retry on whitespace boundaries, then take all fine-grained tokens the
    # matched whitespace stretch covers
    ws: list[tuple[int, int]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                ws.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        ws.append((start, len(text)))
    ws_starts = {a: k for k, (a, _) in enumerate(ws)}
    ws_ends = {b: k for k, (_, b) in enumerate(ws)}
    if char_from in ws_starts and char_to in ws_ends and ws_starts[char_from] <= ws_ends[char_to]:
        lo = ws[ws_starts[char_from]][0]
        hi = ws[ws_ends[char_to]][1]
        covered = [i for i, (_, a, b) in enumerate(toks) if a >= lo and b <= hi]
        if covered and covered == list(range(covered[0], covered[-1] + 1)):
            return covered[0], len(covered), tokens

    raise AlignmentError(
        f"sentence {sent_id!r}: aspect span [{char_from}, {char_to}) does not "
        f"align to token boundaries in {text!r}"
    )


def _polarity_id(label: str, where: str) -> int:
    try:
        return _POLARITY_IDS[label]
    except KeyError:
        raise LabelError(f"{where}: unknown polarity label {label!r}") from None


def parse_semeval(xml_bytes: bytes, schema: str, id_prefix: str = "") -> list[Instance]:
    """Parse a SemEval ABSA XML file into instances.

    ``schema`` is ``"v2014"`` (aspectTerm elements) or ``"v2015_16"``
    (Opinion elements). Aspects labelled "conflict" and 2015/16 opinions with
    target "NULL" are dropped. One instance is produced per (sentence, aspect
    span) pair; a span annotated with contradictory polarities is treated as
    conflicting and dropped.
    """
    if schema not in (SEMEVAL_V2014, SEMEVAL_V2015_16):
        raise ParseError(f"unknown SemEval schema {schema!r}")
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as e:
        raise ParseError(f"malformed XML (line {e.position[0]}, column {e.position[1]}): {e}") from e

    aspect_tag = "aspectTerm" if schema == SEMEVAL_V2014 else "Opinion"
    instances: list[Instance] = []
    for sentence in root.iter("sentence"):
        sent_id = sentence.get("id", "")
        text_elem = sentence.find("text")
        if text_elem is None or text_elem.text is None:
            continue
        text = text_elem.text

        groups: dict[tuple[int, int], set[int]] = {}
        for el in sentence.iter(aspect_tag):
            polarity = el.get("polarity", "")
            if polarity == "conflict":
                continue
            if schema == SEMEVAL_V2015_16 and el.get("target", "") == "NULL":
                continue
            try:
                char_from, char_to = int(el.get("from")), int(el.get("to"))
            except (TypeError, ValueError):
                raise ParseError(f"sentence {sent_id!r}: {aspect_tag} without numeric from/to") from None
            groups.setdefault((char_from, char_to), set()).add(
                _polarity_id(polarity, f"sentence {sent_id!r}")
            )

        for (char_from, char_to), polarities in sorted(groups.items()):
            if len(polarities) != 1:  # contradictory annotation of one span
                continue
            start, length, tokens = _align_span(text, char_from, char_to, sent_id)
            instances.append(
                Instance(
                    tokens=tuple(tokens),
                    aspect_start=start,
                    aspect_len=length,
                    polarity=next(iter(polarities)),
                    id=f"{id_prefix}{sent_id}:{char_from}:{char_to}",
                )
            )
    return instances


_TWITTER_LABELS = {"1": POSITIVE, "0": NEUTRAL, "-1": NEGATIVE}


def parse_twitter(text_bytes: bytes, id_prefix: str = "") -> list[Instance]:
    """Parse the 3-line-per-record Twitter format.

    Line 1 holds the sentence with a ``$T$`` placeholder, line 2 the aspect
    string, line 3 the label (1 / 0 / -1 for positive / neutral / negative).
    """
    lines = text_bytes.decode("utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 3 != 0:
        raise FormatError(f"truncated record: {len(lines)} lines is not a multiple of 3")

    instances = []
    for rec, k in enumerate(range(0, len(lines), 3)):
        sentence, aspect, label = lines[k], lines[k + 1].strip(), lines[k + 2].strip()
        if label not in _TWITTER_LABELS:
            raise LabelError(f"record {rec}: unknown label {label!r}")
        if sentence.count("$T$") != 1:
            raise FormatError(f"record {rec}: expected exactly one $T$ placeholder")
        left, right = sentence.split("$T$")
        left_toks, aspect_toks, right_toks = tokenize(left), tokenize(aspect), tokenize(right)
        if not aspect_toks:
            raise FormatError(f"record {rec}: empty aspect string")
        instances.append(
            Instance(
                tokens=tuple(left_toks + aspect_toks + right_toks),
                aspect_start=len(left_toks),
                aspect_len=len(aspect_toks),
                polarity=_TWITTER_LABELS[label],
                id=f"{id_prefix}r{rec}",
            )
        )
    return instances


class Vocabulary:
    """Token -> index map with PAD=0 and UNK=1, insertion-ordered."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.token_to_index: dict[str, int] = {PAD: 0, UNK: 1}
        for tok in tokens:
            if tok not in self.token_to_index:
                self.token_to_index[tok] = len(self.token_to_index)

    def __len__(self):
        return len(self.token_to_index)

    def __contains__(self, tok):
        return tok in self.token_to_index

    def index(self, tok: str) -> int:
        return self.token_to_index.get(tok, 1)

    def indices(self, tokens: Iterable[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    @property
    def tokens(self) -> list[str]:
        return list(self.token_to_index)


def build_vocab(datasets: Iterable[Dataset]) -> Vocabulary:
    """Vocabulary over every token of the given datasets (typically train+test)."""
    def all_tokens():
        for ds in datasets:
            for inst in ds.instances:
                yield from inst.tokens

    return Vocabulary(all_tokens())


def dataset_stats(dataset: Dataset) -> ClassCounts:
    counts = [0, 0, 0]
    for inst in dataset.instances:
        counts[inst.polarity] += 1
    return ClassCounts(positive=counts[POSITIVE], negative=counts[NEGATIVE], neutral=counts[NEUTRAL])


def to_tsv(instances: Iterable[Instance]) -> str:
    """Canonical interchange format: one record per line, tab-separated
    (tokens space-joined, aspect_start, aspect_len, polarity, id)."""
    lines = []
    for inst in instances:
        lines.append(
            "\t".join(
                (" ".join(inst.tokens), str(inst.aspect_start), str(inst.aspect_len), str(inst.polarity), inst.id)
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def from_tsv(text: str) -> list[Instance]:
    instances = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise FormatError(f"TSV line {ln}: expected 5 tab-separated fields, got {len(fields)}")
        tokens, start, length, polarity, inst_id = fields
        instances.append(
            Instance(
                tokens=tuple(tokens.split(" ")),
                aspect_start=int(start),
                aspect_len=int(length),
                polarity=int(polarity),
                id=inst_id,
            )
        )
    return instances


def load_dataset(path, name: str, split: str) -> Dataset:
    """Load one benchmark split from its raw file (XML, Twitter text, or TSV)."""
    if name not in DATASET_NAMES and name != "custom":
        raise ParseError(f"unknown dataset name {name!r}")
    if split not in SPLITS:
        raise ParseError(f"unknown split {split!r}; expected one of {SPLITS}")
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataError(f"cannot read dataset file {path}: {e}") from e
    prefix = f"{name}-{split}-"
    p = str(path)
    if p.endswith(".tsv"):
        instances = from_tsv(raw.decode("utf-8"))
    elif name == "twitter" or p.endswith((".raw", ".txt")):
        instances = parse_twitter(raw, id_prefix=prefix)
    else:
        schema = SEMEVAL_V2014 if name in ("laptop14", "restaurant14", "custom") else SEMEVAL_V2015_16
        instances = parse_semeval(raw, schema, id_prefix=prefix)
    return Dataset(name=name, split=split, instances=instances)
