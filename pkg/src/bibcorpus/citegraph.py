"""In-corpus citation graph from extracted bibliographies.

Bibliography entries are linked to publications by normalized-title
similarity; the graph keeps deduplicated incoming/outgoing id lists per
publication (set semantics) and drops self-edges.
"""
from __future__ import annotations

import json
import logging
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .align import similarity
from .errors import LookupUnavailable
from .models import BibEntry

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.8

_PUNCT_RE = re.compile(r"[^0-9a-z]+")

HISTOGRAM_BUCKETS = ((0, 0), (1, 1), (2, 4), (5, 9), (10, 19), (20, 49), (50, 99), (100, None))


def normalize_title(title: str) -> str:
    return " ".join(_PUNCT_RE.sub(" ", title.lower()).split())


@dataclass
class TitleIndex:
    by_title: dict[str, list[str]] = field(default_factory=dict)
    years: dict[str, int | None] = field(default_factory=dict)
    bags: dict[str, Counter] = field(default_factory=dict)


def build_title_index(corpus) -> TitleIndex:
    """Multimap of normalized title -> publication ids, over store records."""
    index = TitleIndex()
    for rec in corpus:
        key = normalize_title(rec["title"])
        index.by_title.setdefault(key, []).append(rec["id"])
        index.years[rec["id"]] = rec.get("year")
    for title, ids in index.by_title.items():
        ids.sort()
        index.bags[title] = Counter(title)
    return index


def _bag_bound(bag_a: Counter, bag_b: Counter) -> int:
    """Bag distance, a cheap lower bound on the edit distance."""
    extra_a = sum((bag_a - bag_b).values())
    extra_b = sum((bag_b - bag_a).values())
    return max(extra_a, extra_b)


def match_bib_entry(entry: BibEntry, index: TitleIndex,
                    threshold: float = DEFAULT_THRESHOLD) -> str | None:
    """Best title match at or above the threshold, deterministically tie-broken.

    Ties at equal similarity prefer a publication whose year equals the
    entry's raw year, then the lexicographically smallest id.
    """
    wanted = normalize_title(entry.raw_title)
    if not wanted:
        return None
    exact = index.by_title.get(wanted)
    if exact:
        return _break_tie(exact, entry, index)

    best_score = -1.0
    best_ids: list[str] = []
    wanted_bag = Counter(wanted)
    for title, ids in index.by_title.items():
        # length gap and bag distance are lower bounds on the edit distance,
        # so these prunes use the same arithmetic as the score check below
        longest = max(len(title), len(wanted))
        if longest and 1.0 - abs(len(title) - len(wanted)) / longest < threshold:
            continue
        bag = index.bags.get(title)
        if bag is not None and longest and 1.0 - _bag_bound(wanted_bag, bag) / longest < threshold:
            continue
        score = similarity(wanted, title)
        if score < threshold:
            continue
        if score > best_score:
            best_score = score
            best_ids = list(ids)
        elif score == best_score:
            best_ids.extend(ids)
    if not best_ids:
        return None
    return _break_tie(best_ids, entry, index)


def _break_tie(ids: list[str], entry: BibEntry, index: TitleIndex) -> str:
    if entry.raw_year is not None:
        same_year = [i for i in ids if index.years.get(i) == entry.raw_year]
        if same_year:
            return min(same_year)
    return min(ids)


@dataclass
class CitationGraph:
    outgoing: dict[str, list[str]] = field(default_factory=dict)
    incoming: dict[str, list[str]] = field(default_factory=dict)
    unresolved_out: dict[str, int] = field(default_factory=dict)

    def to_records(self, corpus_ids) -> list[dict]:
        """One citations record per publication, zero-degree ones included."""
        records = []
        for pub_id in sorted(corpus_ids):
            inc = self.incoming.get(pub_id, [])
            out = self.outgoing.get(pub_id, [])
            records.append({
                "id": pub_id,
                "incoming": {"ids": inc, "count": len(inc)},
                "outgoing": {"ids": out, "count": len(out)},
                "unresolved_out": self.unresolved_out.get(pub_id, 0),
            })
        return records

    @classmethod
    def from_records(cls, records) -> "CitationGraph":
        graph = cls()
        for rec in records:
            graph.incoming[rec["id"]] = list(rec["incoming"]["ids"])
            graph.outgoing[rec["id"]] = list(rec["outgoing"]["ids"])
            graph.unresolved_out[rec["id"]] = rec.get("unresolved_out", 0)
        return graph


def build_graph(bibliographies, index: TitleIndex,
                threshold: float = DEFAULT_THRESHOLD) -> CitationGraph:
    """Link bibliographies to the corpus.

    ``bibliographies`` yields (publication_id, [BibEntry]) pairs. Duplicate
    entries to one target collapse to a single edge; self-citations are
    dropped; entries with no in-corpus match are counted as unresolved.
    """
    graph = CitationGraph()
    edges: dict[str, set[str]] = {}
    for pub_id, entries in sorted(bibliographies, key=lambda p: p[0]):
        targets = edges.setdefault(pub_id, set())
        unresolved = 0
        for entry in entries:
            target = match_bib_entry(entry, index, threshold)
            if target is None:
                unresolved += 1
            elif target != pub_id:
                targets.add(target)
        graph.unresolved_out[pub_id] = unresolved
    incoming: dict[str, set[str]] = {}
    for src, targets in edges.items():
        graph.outgoing[src] = sorted(targets)
        for dst in targets:
            incoming.setdefault(dst, set()).add(src)
    graph.incoming = {dst: sorted(srcs) for dst, srcs in incoming.items()}
    return graph


# --- statistics -----------------------------------------------------------


@dataclass
class CitationStats:
    mean_in: float
    mean_out: float
    median_in: float
    median_out: float
    zero_in_count: int
    zero_in_share: float
    one_in_count: int
    one_in_share: float
    histogram_in: list[tuple[str, int]]
    histogram_out: list[tuple[str, int]]

    def to_dict(self) -> dict:
        return {
            "mean_in": self.mean_in,
            "mean_out": self.mean_out,
            "median_in": self.median_in,
            "median_out": self.median_out,
            "zero_in_count": self.zero_in_count,
            "zero_in_share": self.zero_in_share,
            "one_in_count": self.one_in_count,
            "one_in_share": self.one_in_share,
            "histogram_in": [list(b) for b in self.histogram_in],
            "histogram_out": [list(b) for b in self.histogram_out],
        }


def _bucket_label(lo: int, hi: int | None) -> str:
    if hi is None:
        return f"{lo}+"
    if lo == hi:
        return str(lo)
    return f"{lo}-{hi}"


def _histogram(degrees: list[int]) -> list[tuple[str, int]]:
    hist = []
    for lo, hi in HISTOGRAM_BUCKETS:
        count = sum(1 for d in degrees if d >= lo and (hi is None or d <= hi))
        hist.append((_bucket_label(lo, hi), count))
    return hist


def citation_stats(graph: CitationGraph, corpus_ids) -> CitationStats:
    """Degree statistics over all publications, zero-degree ones included."""
    ids = sorted(corpus_ids)
    n = len(ids)
    degree_in = [len(graph.incoming.get(i, [])) for i in ids]
    degree_out = [len(graph.outgoing.get(i, [])) for i in ids]
    if n == 0:
        raise ValueError("citation_stats needs a non-empty corpus")
    zero_in = sum(1 for d in degree_in if d == 0)
    one_in = sum(1 for d in degree_in if d == 1)
    return CitationStats(
        mean_in=sum(degree_in) / n,
        mean_out=sum(degree_out) / n,
        median_in=float(statistics.median(degree_in)),
        median_out=float(statistics.median(degree_out)),
        zero_in_count=zero_in,
        zero_in_share=zero_in / n,
        one_in_count=one_in,
        one_in_share=one_in / n,
        histogram_in=_histogram(degree_in),
        histogram_out=_histogram(degree_out),
    )


# --- external citation share ----------------------------------------------


class FixtureLookup:
    """Reads external total incoming-citation counts from a JSON file."""

    def __init__(self, path):
        self._counts = json.loads(Path(path).read_text(encoding="utf-8"))

    def total_incoming(self, pub_id: str) -> int:
        if pub_id not in self._counts:
            raise LookupUnavailable(pub_id)
        return int(self._counts[pub_id])


class HttpLookup:
    """Semantic-Scholar-compatible citation-count client."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def total_incoming(self, pub_id: str) -> int:
        import httpx

        try:
            resp = httpx.get(
                f"{self.endpoint}/{pub_id}",
                params={"fields": "citationCount"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise LookupUnavailable(pub_id) from exc
        if resp.status_code != 200:
            raise LookupUnavailable(pub_id)
        payload = resp.json()
        if "citationCount" not in payload:
            raise LookupUnavailable(pub_id)
        return int(payload["citationCount"])


@dataclass
class ExternalShareReport:
    share: float
    sampled: int
    skipped: list[str]


def external_citation_share(sample_ids, graph: CitationGraph, lookup_client) -> ExternalShareReport:
    """Share of incoming citations originating outside the corpus.

    Aggregated over the sample: 1 - (in-corpus incoming / external total),
    clamped to [0, 1]. Unavailable lookups are skipped and reported; if every
    lookup fails the last error propagates.
    """
    in_corpus = 0
    external_total = 0
    skipped: list[str] = []
    last_error: LookupUnavailable | None = None
    sampled = 0
    for pub_id in sample_ids:
        try:
            total = lookup_client.total_incoming(pub_id)
        except LookupUnavailable as exc:
            skipped.append(pub_id)
            last_error = exc
            continue
        sampled += 1
        in_corpus += len(graph.incoming.get(pub_id, []))
        external_total += total
    if sampled == 0:
        if last_error is not None:
            raise last_error
        raise LookupUnavailable("<empty sample>")
    if external_total == 0:
        share = 0.0
    else:
        share = 1.0 - in_corpus / external_total
    return ExternalShareReport(share=min(1.0, max(0.0, share)),
                               sampled=sampled, skipped=skipped)
