"""Span-level precision/recall/F1 over exactly matching (type, start, end)
entities, plus the two-sample significance test used when comparing runs.

``spans_from_iobes`` is deliberately tolerant: decoder output is not
structurally constrained, so invalid fragments are repaired the way the
classic CoNLL scorer reads them (each maximal same-type run is one span; an
I/E without an open span starts a new one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy import stats


@dataclass(frozen=True, order=True)
class SpanEntity:
    entity_type: str
    start: int
    end: int  # inclusive


def spans_from_iobes(labels: Sequence[str]) -> set[SpanEntity]:
    """Extract spans from a possibly malformed IOBES sequence (repairing)."""
    spans: set[SpanEntity] = set()
    open_type: str | None = None
    open_start = 0

    def close(last_index: int):
        nonlocal open_type
        if open_type is not None:
            spans.add(SpanEntity(open_type, open_start, last_index))
            open_type = None

    for i, tag in enumerate(labels):
        if tag == "O":
            close(i - 1)
            continue
        if "-" not in tag:
            raise ValueError(f"not an IOBES tag at index {i}: {tag!r}")
        prefix, etype = tag.split("-", 1)
        if prefix not in ("B", "I", "E", "S"):
            raise ValueError(f"not an IOBES tag at index {i}: {tag!r}")
        if prefix == "S":
            close(i - 1)
            spans.add(SpanEntity(etype, i, i))
        elif prefix == "B":
            close(i - 1)
            open_type, open_start = etype, i
        elif prefix == "I":
            if open_type != etype:  # repair: I without an open span starts one
                close(i - 1)
                open_type, open_start = etype, i
        else:  # E
            if open_type == etype:
                spans.add(SpanEntity(etype, open_start, i))
                open_type = None
            else:  # repair: dangling E is a singleton
                close(i - 1)
                spans.add(SpanEntity(etype, i, i))
    close(len(labels) - 1)
    return spans


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    matched: int
    pred_count: int
    gold_count: int


def _prf(matched: int, pred_count: int, gold_count: int) -> PRF:
    # 0/0 ratios define the metric as 0
    p = matched / pred_count if pred_count else 0.0
    r = matched / gold_count if gold_count else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return PRF(p, r, f1, matched, pred_count, gold_count)


@dataclass
class SpanScores:
    overall: PRF
    per_type: dict[str, PRF]

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1


def span_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> SpanScores:
    """Micro-averaged span P/R/F1 with a per-entity-type breakdown.

    Matching requires the identical (type, start, end) triple within the same
    sentence.
    """
    if len(gold) != len(pred):
        raise ValueError(f"sentence count mismatch: gold={len(gold)} pred={len(pred)}")
    matched = pred_count = gold_count = 0
    by_type: dict[str, list[int]] = {}
    for idx, (g_labels, p_labels) in enumerate(zip(gold, pred)):
        if len(g_labels) != len(p_labels):
            raise ValueError(f"sentence {idx}: length mismatch gold={len(g_labels)} pred={len(p_labels)}")
        g_spans = spans_from_iobes(g_labels)
        p_spans = spans_from_iobes(p_labels)
        hit = g_spans & p_spans
        matched += len(hit)
        pred_count += len(p_spans)
        gold_count += len(g_spans)
        for span in g_spans | p_spans:
            counts = by_type.setdefault(span.entity_type, [0, 0, 0])
            counts[0] += span in hit
            counts[1] += span in p_spans
            counts[2] += span in g_spans
    per_type = {t: _prf(*c) for t, c in sorted(by_type.items())}
    return SpanScores(_prf(matched, pred_count, gold_count), per_type)


@dataclass
class TTestResult:
    t_statistic: float
    df: float
    p_value: float
    significant: bool
    alpha: float


def two_sample_t_test(scores_a: Sequence[float], scores_b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Welch's two-sample t-test, two-sided.

    Degenerate variances are handled explicitly: equal-mean zero-variance
    groups give t = 0 (not significant); unequal means with zero variance in
    both groups give an infinite statistic (significant).
    """
    if len(scores_a) < 2 or len(scores_b) < 2:
        raise ValueError("each group needs at least two observations")
    na, nb = len(scores_a), len(scores_b)
    ma = sum(scores_a) / na
    mb = sum(scores_b) / nb
    va = sum((x - ma) ** 2 for x in scores_a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in scores_b) / (nb - 1)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if ma == mb:
            return TTestResult(0.0, float(na + nb - 2), 1.0, False, alpha)
        t = math.inf if ma > mb else -math.inf
        return TTestResult(t, float(na + nb - 2), 0.0, True, alpha)
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * float(stats.t.sf(abs(t), df))
    return TTestResult(t, df, p, p < alpha, alpha)
