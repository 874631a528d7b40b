"""CoNLL column-format reading, tagging-scheme conversion, and vocabularies.

Input files are whitespace-separated columns with blank lines between
sentences (UTF-8).  The column layout is configurable; the default is
``word pos chunk ner``.  Raw files may be tagged IOB1 or IOB2; everything is
converted to IOBES before training or evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

DEFAULT_COLUMNS = ("word", "pos", "chunk", "ner")

UNK_WORD = "<unk>"
PAD_WORD = "<pad>"
UNK_CHAR = "<unk>"
PAD_CHAR = "<pad>"
OOV_SLOT = "<oov>"


class CorpusFormatError(ValueError):
    """Malformed column data; the message carries the 1-based line number."""


@dataclass(frozen=True)
class Token:
    surface: str
    gold_label: str | None = None
    pos: str | None = None
    chunk: str | None = None
    dep_label: str | None = None

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")


@dataclass(frozen=True)
class SentenceRecord:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def labels(self) -> list[str]:
        out = []
        for t in self.tokens:
            if t.gold_label is None:
                raise ValueError("sentence has no gold labels")
            out.append(t.gold_label)
        return out


def parse_conll(
    stream: str | Iterable[str],
    columns: Sequence[str] = DEFAULT_COLUMNS,
    keep_docstart: bool = False,
) -> list[SentenceRecord]:
    """Parse column text into sentence records, preserving values verbatim.

    Sentence boundaries are exactly the blank lines.  Lines whose first field
    is ``-DOCSTART-`` are dropped unless ``keep_docstart`` is set.  A row with
    the wrong number of columns raises :class:`CorpusFormatError` with its
    line number.
    """
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in stream]
    columns = tuple(columns)
    if "word" not in columns:
        raise ValueError("column layout must include 'word'")

    sentences: list[SentenceRecord] = []
    current: list[Token] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            if current:
                sentences.append(SentenceRecord(tuple(current)))
                current = []
            continue
        fields = line.split()
        if fields[0] == "-DOCSTART-" and not keep_docstart:
            continue
        if len(fields) != len(columns):
            raise CorpusFormatError(
                f"line {lineno}: expected {len(columns)} columns ({' '.join(columns)}), "
                f"got {len(fields)}: {line!r}"
            )
        row = dict(zip(columns, fields))
        current.append(
            Token(
                surface=row["word"],
                gold_label=row.get("ner"),
                pos=row.get("pos"),
                chunk=row.get("chunk"),
                dep_label=row.get("dep"),
            )
        )
    if current:
        sentences.append(SentenceRecord(tuple(current)))
    return sentences


def read_conll_file(path, columns=DEFAULT_COLUMNS, keep_docstart=False) -> list[SentenceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh, columns=columns, keep_docstart=keep_docstart)


def serialize_conll(sentences: Sequence[SentenceRecord], columns: Sequence[str] = DEFAULT_COLUMNS) -> str:
    """Inverse of :func:`parse_conll` (single-space separated)."""
    field_of = {"word": "surface", "ner": "gold_label", "pos": "pos", "chunk": "chunk", "dep": "dep_label"}
    out_lines = []
    for sent in sentences:
        for tok in sent.tokens:
            out_lines.append(" ".join(getattr(tok, field_of[c]) for c in columns))
        out_lines.append("")
    return "\n".join(out_lines)


# -- tagging schemes -------------------------------------------------------------


def _split_tag(tag: str, index: int) -> tuple[str, str]:
    if "-" not in tag:
        raise ValueError(f"invalid tag at index {index}: {tag!r}")
    prefix, etype = tag.split("-", 1)
    return prefix, etype


def labels_to_spans(labels: Sequence[str], scheme: str) -> list[tuple[str, int, int]]:
    """Extract (type, start, end-inclusive) spans, validating against ``scheme``.

    IOB1: spans open with I- (or B- which may only split two adjacent
    same-type spans).  IOB2: spans open with B-; I- only continues.  The
    first offending index is named on error.
    """
    scheme = scheme.upper()
    if scheme not in ("IOB1", "IOB2"):
        raise ValueError(f"unknown scheme {scheme!r}")
    spans: list[tuple[str, int, int]] = []
    open_type: str | None = None
    open_start = 0
    prev_tag = "O"
    for i, tag in enumerate(labels):
        if tag == "O":
            if open_type is not None:
                spans.append((open_type, open_start, i - 1))
                open_type = None
            prev_tag = tag
            continue
        prefix, etype = _split_tag(tag, i)
        if prefix not in ("B", "I"):
            raise ValueError(f"invalid {scheme} sequence at index {i}: unexpected prefix in {tag!r}")
        if scheme == "IOB1" and prefix == "B":
            # B- is only legal immediately after a same-type entity token
            if prev_tag == "O" or _split_tag(prev_tag, i - 1)[1] != etype:
                raise ValueError(f"invalid IOB1 sequence at index {i}: {tag!r} does not split a same-type span")
        if scheme == "IOB2" and prefix == "I":
            if prev_tag == "O" or _split_tag(prev_tag, i - 1)[1] != etype:
                raise ValueError(f"invalid IOB2 sequence at index {i}: {tag!r} has no open {etype} span")
        if open_type is not None and (prefix == "B" or open_type != etype):
            spans.append((open_type, open_start, i - 1))
            open_type = None
        if open_type is None:
            open_type = etype
            open_start = i
        prev_tag = tag
    if open_type is not None:
        spans.append((open_type, open_start, len(labels) - 1))
    return spans


def iobes_labels_to_spans(labels: Sequence[str]) -> list[tuple[str, int, int]]:
    """Strict IOBES span extraction (use eval's tolerant reader for decoder output)."""
    spans: list[tuple[str, int, int]] = []
    open_type: str | None = None
    open_start = 0
    for i, tag in enumerate(labels):
        if tag == "O":
            if open_type is not None:
                raise ValueError(f"invalid IOBES sequence at index {i}: open {open_type} span not closed")
            continue
        prefix, etype = _split_tag(tag, i)
        if prefix == "S":
            if open_type is not None:
                raise ValueError(f"invalid IOBES sequence at index {i}: S inside open span")
            spans.append((etype, i, i))
        elif prefix == "B":
            if open_type is not None:
                raise ValueError(f"invalid IOBES sequence at index {i}: B inside open span")
            open_type, open_start = etype, i
        elif prefix == "I":
            if open_type != etype:
                raise ValueError(f"invalid IOBES sequence at index {i}: I-{etype} without open span")
        elif prefix == "E":
            if open_type != etype:
                raise ValueError(f"invalid IOBES sequence at index {i}: E-{etype} without open span")
            spans.append((etype, open_start, i))
            open_type = None
        else:
            raise ValueError(f"invalid IOBES sequence at index {i}: {tag!r}")
    if open_type is not None:
        raise ValueError(f"invalid IOBES sequence at index {len(labels) - 1}: unterminated {open_type} span")
    return spans


def spans_to_iobes(spans: Sequence[tuple[str, int, int]], length: int) -> list[str]:
    """Emit IOBES labels for non-overlapping spans: singletons S-, else B- I-* E-."""
    labels = ["O"] * length
    for etype, start, end in spans:
        if not (0 <= start <= end < length):
            raise ValueError(f"span {(etype, start, end)} out of bounds for length {length}")
        if start == end:
            labels[start] = f"S-{etype}"
        else:
            labels[start] = f"B-{etype}"
            for i in range(start + 1, end):
                labels[i] = f"I-{etype}"
            labels[end] = f"E-{etype}"
    return labels


def to_iobes(labels: Sequence[str], source_scheme: str) -> list[str]:
    """Convert an IOB1/IOB2 sequence to IOBES, preserving the span set exactly."""
    spans = labels_to_spans(labels, source_scheme)
    return spans_to_iobes(spans, len(labels))


def detect_scheme(sentences: Sequence[SentenceRecord]) -> str:
    """Infer IOB1 vs IOB2 from the corpus.

    An I- tag opening a span (after O, start, or a different type) only occurs
    in IOB1; a B- tag opening a span after O/start/different type only in
    IOB2.  Mixed evidence is an error; no evidence defaults to IOB2 (the two
    schemes then convert identically).
    """
    saw_iob1 = saw_iob2 = False
    for sent in sentences:
        prev = "O"
        for i, tag in enumerate(sent.labels):
            if tag != "O":
                prefix, etype = _split_tag(tag, i)
                prev_type = None if prev == "O" else _split_tag(prev, i - 1)[1]
                opens = prev_type != etype
                if prefix == "I" and opens:
                    saw_iob1 = True
                elif prefix == "B" and opens:
                    saw_iob2 = True
            prev = tag
    if saw_iob1 and saw_iob2:
        raise ValueError("corpus mixes IOB1 and IOB2 tagging; pass the scheme explicitly")
    return "IOB1" if saw_iob1 else "IOB2"


def convert_corpus_to_iobes(sentences: Sequence[SentenceRecord], scheme: str = "auto") -> list[SentenceRecord]:
    """Return sentences with labels converted to IOBES (scheme auto-detected by default)."""
    if scheme == "auto":
        scheme = detect_scheme(sentences)
    out = []
    for sent in sentences:
        new_labels = to_iobes(sent.labels, scheme)
        out.append(SentenceRecord(tuple(replace(t, gold_label=l) for t, l in zip(sent.tokens, new_labels))))
    return out


# -- vocabulary -------------------------------------------------------------------


@dataclass
class Vocabulary:
    """Dense 0-based id maps, deterministic given corpus + pretrained set.

    Words: UNK id 0, PAD id 1, then sorted surface forms (train union
    pretrained).  POS/shape/dep maps reserve id 0 for their OOV slot.
    """

    word2id: dict[str, int]
    char2id: dict[str, int]
    pos2id: dict[str, int]
    shape2id: dict[str, int]
    dep2id: dict[str, int]
    label2id: dict[str, int]
    word_counts: dict[str, int] = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return sorted(self.label2id, key=self.label2id.get)

    def word_id(self, surface: str) -> int:
        """Exact match, else case-folded match, else UNK."""
        wid = self.word2id.get(surface)
        if wid is not None:
            return wid
        wid = self.word2id.get(surface.lower())
        return wid if wid is not None else self.word2id[UNK_WORD]

    def char_id(self, ch: str) -> int:
        return self.char2id.get(ch, self.char2id[UNK_CHAR])

    def to_dict(self) -> dict:
        def ordered(m):
            return sorted(m, key=m.get)

        return {
            "words": ordered(self.word2id),
            "chars": ordered(self.char2id),
            "pos": ordered(self.pos2id),
            "shapes": ordered(self.shape2id),
            "deps": ordered(self.dep2id),
            "labels": ordered(self.label2id),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        def index(seq):
            return {s: i for i, s in enumerate(seq)}

        return cls(
            word2id=index(d["words"]),
            char2id=index(d["chars"]),
            pos2id=index(d["pos"]),
            shape2id=index(d["shapes"]),
            dep2id=index(d["deps"]),
            label2id=index(d["labels"]),
        )


def build_vocab(train_corpus: Sequence[SentenceRecord], pretrained_words: Iterable[str] = ()) -> Vocabulary:
    """Build all id maps from an IOBES-converted training corpus.

    The word map covers train words plus every pretrained word, so dev/test
    lookups can still hit real vectors.  Construction sorts everything, so two
    builds over the same inputs assign identical ids.
    """
    from .features import word_shape  # local import to avoid a cycle

    counts: dict[str, int] = {}
    chars: set[str] = set()
    pos_tags: set[str] = set()
    shapes: set[str] = set()
    deps: set[str] = set()
    labels: set[str] = {"O"}
    for sent in train_corpus:
        for tok in sent.tokens:
            counts[tok.surface] = counts.get(tok.surface, 0) + 1
            chars.update(tok.surface)
            shapes.add(word_shape(tok.surface))
            if tok.pos is not None:
                pos_tags.add(tok.pos)
            if tok.dep_label is not None:
                deps.add(tok.dep_label)
            if tok.gold_label is not None:
                labels.add(tok.gold_label)

    words = sorted(set(counts) | set(pretrained_words))
    word2id = {UNK_WORD: 0, PAD_WORD: 1}
    for w in words:
        if w not in word2id:
            word2id[w] = len(word2id)
    char2id = {UNK_CHAR: 0, PAD_CHAR: 1}
    for c in sorted(chars):
        char2id[c] = len(char2id)

    def with_oov(items: set[str]) -> dict[str, int]:
        out = {OOV_SLOT: 0}
        for s in sorted(items):
            out[s] = len(out)
        return out

    label2id = {l: i for i, l in enumerate(sorted(labels))}
    return Vocabulary(
        word2id=word2id,
        char2id=char2id,
        pos2id=with_oov(pos_tags),
        shape2id=with_oov(shapes),
        dep2id=with_oov(deps),
        label2id=label2id,
        word_counts=counts,
    )
