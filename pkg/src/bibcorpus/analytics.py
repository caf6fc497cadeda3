"""Corpus report computations: volume, activity, terms, citation trends.

Every function here is a pure, deterministic pass over store records so
report output is byte-identical across runs and worker counts.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .citegraph import CitationGraph
from .errors import EmptyWindow, InsufficientPoints
from .models import PubType

logger = logging.getLogger(__name__)

DEFAULT_AUTHOR_BINS = (1, 2, 5, 10, 20, 50)
ACTIVITY_GRID = (2, 3, 5, 8, 13)

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


# --- volume ---------------------------------------------------------------


def counts_by_type(pubs) -> dict[PubType, tuple[int, float]]:
    """Per-type publication counts and shares; shares sum to 1."""
    counts: dict[PubType, int] = {}
    total = 0
    for rec in pubs:
        pub_type = PubType.from_label(rec["type"])
        counts[pub_type] = counts.get(pub_type, 0) + 1
        total += 1
    if total == 0:
        return {}
    return {t: (c, c / total) for t, c in counts.items()}


@dataclass
class YearSeries:
    points: list[tuple[int, float]] = field(default_factory=list)

    def years(self) -> list[int]:
        return [y for y, _ in self.points]

    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def without_year(self, year: int) -> "YearSeries":
        return YearSeries([(y, v) for y, v in self.points if y != year])


def yearly_series(pubs, entity: str = "publications") -> YearSeries:
    """Counts per year: papers, or distinct publishing authors."""
    if entity == "publications":
        per_year: dict[int, float] = {}
        for rec in pubs:
            year = rec.get("year")
            if year is None:
                continue
            per_year[year] = per_year.get(year, 0) + 1
        return YearSeries(sorted(per_year.items()))
    if entity == "distinct_authors":
        authors_by_year: dict[int, set] = {}
        for rec in pubs:
            year = rec.get("year")
            if year is None:
                continue
            authors_by_year.setdefault(year, set()).update(rec.get("authors") or [])
        return YearSeries(sorted((y, float(len(a))) for y, a in authors_by_year.items()))
    raise ValueError(f"unknown entity {entity!r}")


def avg_growth_rate(series: YearSeries, method: str = "geometric") -> float:
    """Mean year-over-year growth across consecutive positive years."""
    ratios = []
    points = dict(series.points)
    for year, value in series.points:
        prev = points.get(year - 1)
        if prev and prev > 0 and value > 0:
            ratios.append(value / prev)
    if not ratios:
        return 0.0
    if method == "geometric":
        return float(np.exp(np.mean(np.log(ratios))) - 1.0)
    if method == "arithmetic":
        return float(np.mean(ratios) - 1.0)
    raise ValueError(f"unknown averaging method {method!r}")


def avg_authors_per_paper(pubs) -> YearSeries:
    sums: dict[int, int] = {}
    counts: dict[int, int] = {}
    for rec in pubs:
        year = rec.get("year")
        if year is None:
            continue
        sums[year] = sums.get(year, 0) + len(rec.get("authors") or [])
        counts[year] = counts.get(year, 0) + 1
    return YearSeries(sorted((y, sums[y] / counts[y]) for y in counts))


@dataclass
class CubicFit:
    coefficients: tuple[float, float, float, float]  # c0 + c1 t + c2 t^2 + c3 t^3
    rmse: float
    year_center: float

    def predict(self, year: float) -> float:
        t = year - self.year_center
        c0, c1, c2, c3 = self.coefficients
        return c0 + c1 * t + c2 * t * t + c3 * t ** 3


def cubic_fit(series: YearSeries) -> CubicFit:
    """Degree-3 least squares on (year - center, value)."""
    if len(series.points) < 4:
        raise InsufficientPoints(f"cubic fit needs >= 4 points, have {len(series.points)}")
    years = np.array(series.years(), dtype=float)
    values = np.array(series.values(), dtype=float)
    center = float(years.mean())
    t = years - center
    # polyfit returns highest degree first
    c3, c2, c1, c0 = np.polyfit(t, values, deg=3)
    residuals = values - (c0 + c1 * t + c2 * t ** 2 + c3 * t ** 3)
    rmse = float(np.sqrt(np.mean(residuals ** 2)))
    return CubicFit(coefficients=(float(c0), float(c1), float(c2), float(c3)),
                    rmse=rmse, year_center=center)


# --- authors --------------------------------------------------------------


def _bin_label(lo: int, hi: int | None) -> str:
    if hi is None:
        return f"{lo}+"
    if hi == lo:
        return str(lo)
    return f"{lo}-{hi}"


def author_paper_bins(pubs, bin_edges=DEFAULT_AUTHOR_BINS) -> list[tuple[str, int]]:
    """Histogram of authors by total publication count."""
    totals: dict[str, int] = {}
    for rec in pubs:
        for author_id in rec.get("authors") or []:
            totals[author_id] = totals.get(author_id, 0) + 1
    edges = sorted(bin_edges)
    bins = []
    for i, lo in enumerate(edges):
        hi = edges[i + 1] - 1 if i + 1 < len(edges) else None
        count = sum(1 for t in totals.values() if t >= lo and (hi is None or t <= hi))
        bins.append((_bin_label(lo, hi), count))
    return bins


@dataclass
class ActivityQuery:
    min_papers: int
    window_years: int
    reference_year: int


def active_researchers(pubs, query: ActivityQuery, denominator: str = "window"):
    """Fraction of authors with >= min_papers papers inside the window.

    The window is the reference year and the window_years - 1 years before
    it. The denominator is window-local by default; "all_time" counts every
    author in the corpus instead.
    """
    if query.min_papers < 1 or query.window_years < 1:
        raise ValueError("min_papers and window_years must be >= 1")
    start = query.reference_year - query.window_years + 1
    in_window: dict[str, int] = {}
    all_authors: set[str] = set()
    for rec in pubs:
        authors = rec.get("authors") or []
        all_authors.update(authors)
        year = rec.get("year")
        if year is None or not (start <= year <= query.reference_year):
            continue
        for author_id in authors:
            in_window[author_id] = in_window.get(author_id, 0) + 1
    denom = len(in_window) if denominator == "window" else len(all_authors)
    if denom == 0:
        raise EmptyWindow(f"no authors published in [{start}, {query.reference_year}]")
    numer = sum(1 for c in in_window.values() if c >= query.min_papers)
    return numer / denom, numer, denom


def activity_matrix(pubs, reference_year: int, grid=ACTIVITY_GRID,
                    denominator: str = "window"):
    """Fractions over the (min_papers, window_years) grid; pubs must be a list."""
    pubs = list(pubs)
    matrix = {}
    for y in grid:
        for x in grid:
            q = ActivityQuery(min_papers=x, window_years=y, reference_year=reference_year)
            frac, _, _ = active_researchers(pubs, q, denominator)
            matrix[(x, y)] = frac
    return matrix


# --- terms ----------------------------------------------------------------


def load_default_stopwords() -> frozenset[str]:
    text = resources.files("bibcorpus.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def identity_normalizer(token: str) -> str:
    return token


def singularize(token: str) -> str:
    """Rule-based English singularizer; safe on non-English tokens."""
    if len(token) <= 3 or not token.isalpha():
        return token
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith(("ss", "us", "is")):
        return token
    if token.endswith("es") and token[-3] in "sxz":
        return token[:-2]
    if token.endswith("s"):
        return token[:-1]
    return token


@dataclass
class TermTable:
    entries: list[tuple[str, int]]
    field: str
    total_tokens: int = 0
    stopword_tokens: int = 0
    dropped_tokens: int = 0
    counted_tokens: int = 0


def _text_field(rec: dict, field_name: str) -> str | None:
    if field_name == "title":
        return rec.get("title")
    if field_name == "abstract":
        return rec.get("ocr_abstract")
    raise ValueError(f"unknown term field {field_name!r}")


def term_frequencies(pubs, field_name: str = "title", top_k: int = 30,
                     stopwords=None, normalizer=None,
                     venue: str | None = None, year: int | None = None) -> TermTable:
    """Top-k unigram counts over titles or abstracts.

    Tokens are Unicode word matches, lowercased; stopwords are removed and
    1-character or all-digit tokens dropped before the normalizer runs.
    """
    if stopwords is None:
        stopwords = load_default_stopwords()
    if normalizer is None:
        normalizer = singularize
    counts: dict[str, int] = {}
    table = TermTable(entries=[], field=field_name)
    for rec in pubs:
        if venue is not None and rec.get("venue") != venue:
            continue
        if year is not None and rec.get("year") != year:
            continue
        text = _text_field(rec, field_name)
        if not text:
            continue
        for token in _TOKEN_RE.findall(text.lower()):
            table.total_tokens += 1
            if token in stopwords:
                table.stopword_tokens += 1
                continue
            if len(token) <= 1 or token.isdigit():
                table.dropped_tokens += 1
                continue
            term = normalizer(token)
            counts[term] = counts.get(term, 0) + 1
            table.counted_tokens += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    table.entries = ranked[:top_k] if top_k else ranked
    return table


def term_shift(pubs, venue: str | None, field_name: str, year_a: int, year_b: int,
               min_count: int = 1, top_k: int = 30,
               stopwords=None, normalizer=None) -> list[tuple[str, int, int]]:
    """Scatter data for topic drift: term counts in two years of one venue.

    The union of each year's top terms; a term missing from one year carries
    count 0 there. Sorted by combined count descending, term ascending.
    """
    pubs = list(pubs)
    table_a = term_frequencies(pubs, field_name, top_k=top_k, stopwords=stopwords,
                               normalizer=normalizer, venue=venue, year=year_a)
    table_b = term_frequencies(pubs, field_name, top_k=top_k, stopwords=stopwords,
                               normalizer=normalizer, venue=venue, year=year_b)
    full_a = dict(term_frequencies(pubs, field_name, top_k=0, stopwords=stopwords,
                                   normalizer=normalizer, venue=venue, year=year_a).entries)
    full_b = dict(term_frequencies(pubs, field_name, top_k=0, stopwords=stopwords,
                                   normalizer=normalizer, venue=venue, year=year_b).entries)
    terms = {t for t, _ in table_a.entries} | {t for t, _ in table_b.entries}
    rows = []
    for term in terms:
        count_a = full_a.get(term, 0)
        count_b = full_b.get(term, 0)
        if max(count_a, count_b) < min_count:
            continue
        rows.append((term, count_a, count_b))
    rows.sort(key=lambda r: (-(r[1] + r[2]), r[0]))
    return rows


# --- citation trends ------------------------------------------------------


def citation_trend(pubs, graph: CitationGraph) -> tuple[YearSeries, YearSeries]:
    """Mean incoming/outgoing citations per publication year."""
    sums_in: dict[int, int] = {}
    sums_out: dict[int, int] = {}
    counts: dict[int, int] = {}
    for rec in pubs:
        year = rec.get("year")
        if year is None:
            continue
        counts[year] = counts.get(year, 0) + 1
        sums_in[year] = sums_in.get(year, 0) + len(graph.incoming.get(rec["id"], []))
        sums_out[year] = sums_out.get(year, 0) + len(graph.outgoing.get(rec["id"], []))
    incoming = YearSeries(sorted((y, sums_in[y] / counts[y]) for y in counts))
    outgoing = YearSeries(sorted((y, sums_out[y] / counts[y]) for y in counts))
    return incoming, outgoing
