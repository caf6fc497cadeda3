"""Analytics tests: grouping oracles, least-squares oracle, term accounting."""
import random
from collections import Counter

import numpy as np
import pytest

from bibcorpus.analytics import (
    ACTIVITY_GRID,
    ActivityQuery,
    YearSeries,
    active_researchers,
    activity_matrix,
    author_paper_bins,
    avg_authors_per_paper,
    avg_growth_rate,
    citation_trend,
    counts_by_type,
    cubic_fit,
    identity_normalizer,
    load_default_stopwords,
    singularize,
    term_frequencies,
    term_shift,
    yearly_series,
)
from bibcorpus.citegraph import CitationGraph
from bibcorpus.errors import EmptyWindow, InsufficientPoints
from bibcorpus.models import PubType


def random_pubs(rng, n=200):
    pubs = []
    labels = [t.label for t in PubType]
    for i in range(n):
        pubs.append({
            "id": f"p{i:03d}",
            "type": rng.choice(labels),
            "year": rng.choice([None] + list(range(2000, 2011))),
            "authors": [f"a{rng.randint(0, 30)}" for _ in range(rng.randint(0, 4))],
            "title": None,
            "venue": rng.choice(["conf/a", "conf/b"]),
        })
    return pubs


# --- volume ---------------------------------------------------------------


def test_counts_by_type_matches_counter_oracle():
    rng = random.Random(0)
    pubs = random_pubs(rng)
    counts = counts_by_type(pubs)
    oracle = Counter(rec["type"] for rec in pubs)
    for pub_type, (count, share) in counts.items():
        assert count == oracle[pub_type.label]
        assert share == count / len(pubs)
    assert abs(sum(share for _, share in counts.values()) - 1.0) <= 1e-9


def test_counts_by_type_empty():
    assert counts_by_type([]) == {}


def test_yearly_series_matches_groupby_oracle():
    rng = random.Random(1)
    pubs = random_pubs(rng)
    series = yearly_series(pubs, "publications")
    oracle = Counter(r["year"] for r in pubs if r["year"] is not None)
    assert dict(series.points) == dict(oracle)
    assert series.years() == sorted(series.years())

    authors = yearly_series(pubs, "distinct_authors")
    by_year = {}
    for rec in pubs:
        if rec["year"] is not None:
            by_year.setdefault(rec["year"], set()).update(rec["authors"])
    assert dict(authors.points) == {y: len(a) for y, a in by_year.items()}


def test_yearly_series_rejects_unknown_entity():
    with pytest.raises(ValueError):
        yearly_series([], "venues")


def test_avg_authors_per_paper_oracle():
    pubs = [{"year": 2000, "authors": ["a", "b"]},
            {"year": 2000, "authors": ["c"]},
            {"year": 2001, "authors": []},
            {"year": None, "authors": ["d"]}]
    series = avg_authors_per_paper(pubs)
    assert series.points == [(2000, 1.5), (2001, 0.0)]


def test_growth_rate_constant_ratio():
    series = YearSeries([(2000, 100.0), (2001, 110.0), (2002, 121.0)])
    assert avg_growth_rate(series, "geometric") == pytest.approx(0.10)
    assert avg_growth_rate(series, "arithmetic") == pytest.approx(0.10)


def test_growth_rate_geometric_vs_arithmetic():
    series = YearSeries([(2000, 100.0), (2001, 200.0), (2002, 100.0)])
    assert avg_growth_rate(series, "geometric") == pytest.approx(0.0)
    assert avg_growth_rate(series, "arithmetic") == pytest.approx(0.25)


def test_growth_rate_skips_gaps_and_zeroes():
    series = YearSeries([(2000, 100.0), (2002, 50.0), (2003, 0.0), (2004, 10.0)])
    # only 2002->2003 and 2003->2004 are consecutive, both involve a zero
    assert avg_growth_rate(series) == 0.0


def test_growth_rate_unknown_method():
    with pytest.raises(ValueError):
        avg_growth_rate(YearSeries([(2000, 1.0), (2001, 2.0)]), "harmonic")


# --- cubic fit ------------------------------------------------------------


def test_cubic_fit_recovers_exact_cubic():
    years = list(range(1990, 2011))
    center = float(np.mean(years))
    coeffs = (3.0, -1.5, 0.25, 0.01)

    def poly(t):
        return coeffs[0] + coeffs[1] * t + coeffs[2] * t ** 2 + coeffs[3] * t ** 3

    series = YearSeries([(y, poly(y - center)) for y in years])
    fit = cubic_fit(series)
    assert fit.year_center == center
    for got, expect in zip(fit.coefficients, coeffs):
        assert abs(got - expect) <= 1e-6
    assert fit.rmse <= 1e-6
    assert fit.predict(2005) == pytest.approx(poly(2005 - center))


def test_cubic_fit_matches_normal_equations_oracle():
    rng = np.random.default_rng(5)
    years = np.arange(1980, 2020, dtype=float)
    values = 2.0 + 0.1 * years + rng.normal(0, 5.0, size=years.size)
    series = YearSeries(list(zip(years.astype(int), values)))
    fit = cubic_fit(series)
    t = years - years.mean()
    vand = np.vander(t, 4, increasing=True)
    oracle = np.linalg.solve(vand.T @ vand, vand.T @ values)
    for got, expect in zip(fit.coefficients, oracle):
        assert abs(got - expect) <= 1e-8
    # residual orthogonality to the design columns
    residuals = values - vand @ oracle
    rel = np.abs(vand.T @ residuals) / (np.linalg.norm(values) * np.linalg.norm(vand, axis=0))
    assert np.all(rel < 1e-6)


def test_cubic_fit_needs_four_points():
    with pytest.raises(InsufficientPoints):
        cubic_fit(YearSeries([(2000, 1.0), (2001, 2.0), (2002, 3.0)]))


# --- author bins ----------------------------------------------------------


def test_author_paper_bins_brute_force():
    rng = random.Random(2)
    pubs = random_pubs(rng)
    bins = author_paper_bins(pubs)
    totals = Counter(a for rec in pubs for a in rec["authors"])
    expect = {
        "1": sum(1 for c in totals.values() if c == 1),
        "2-4": sum(1 for c in totals.values() if 2 <= c <= 4),
        "5-9": sum(1 for c in totals.values() if 5 <= c <= 9),
        "10-19": sum(1 for c in totals.values() if 10 <= c <= 19),
        "20-49": sum(1 for c in totals.values() if 20 <= c <= 49),
        "50+": sum(1 for c in totals.values() if c >= 50),
    }
    assert dict(bins) == expect


# --- researcher activity --------------------------------------------------


def brute_force_activity(pubs, x, y, ref_year, denominator="window"):
    per_author = {}
    everyone = set()
    for rec in pubs:
        for a in rec.get("authors") or []:
            everyone.add(a)
            if rec.get("year") is not None and ref_year - y + 1 <= rec["year"] <= ref_year:
                per_author[a] = per_author.get(a, 0) + 1
    numer = sum(1 for c in per_author.values() if c >= x)
    denom = len(per_author) if denominator == "window" else len(everyone)
    return numer / denom if denom else None


@pytest.mark.parametrize("seed", range(20))
def test_active_researchers_matches_brute_force(seed):
    rng = random.Random(seed)
    pubs = random_pubs(rng)
    for x in ACTIVITY_GRID:
        for y in ACTIVITY_GRID:
            expect = brute_force_activity(pubs, x, y, 2010)
            if expect is None:
                continue
            frac, _, _ = active_researchers(
                pubs, ActivityQuery(min_papers=x, window_years=y, reference_year=2010))
            assert frac == expect


def test_activity_fraction_antitone_in_min_papers():
    rng = random.Random(9)
    pubs = random_pubs(rng, n=400)
    matrix = activity_matrix(pubs, reference_year=2010)
    for y in ACTIVITY_GRID:
        fractions = [matrix[(x, y)] for x in ACTIVITY_GRID]
        assert fractions == sorted(fractions, reverse=True)


def test_activity_all_time_denominator():
    pubs = [{"year": 2010, "authors": ["a"]},
            {"year": 1990, "authors": ["b"]}]
    q = ActivityQuery(min_papers=1, window_years=2, reference_year=2010)
    frac_window, _, denom_window = active_researchers(pubs, q, "window")
    frac_all, _, denom_all = active_researchers(pubs, q, "all_time")
    assert (frac_window, denom_window) == (1.0, 1)
    assert (frac_all, denom_all) == (0.5, 2)


def test_activity_empty_window():
    with pytest.raises(EmptyWindow):
        active_researchers([{"year": 1980, "authors": ["a"]}],
                           ActivityQuery(1, 2, 2020))


def test_activity_rejects_bad_query():
    with pytest.raises(ValueError):
        active_researchers([], ActivityQuery(0, 2, 2020))


# --- terms ----------------------------------------------------------------


def test_default_stopwords_loaded():
    stopwords = load_default_stopwords()
    assert "the" in stopwords and "of" in stopwords
    assert not any(w.startswith("#") for w in stopwords)


def test_singularize_rules():
    assert singularize("models") == "model"
    assert singularize("studies") == "study"
    assert singularize("boxes") == "box"
    assert singularize("corpus") == "corpus"
    assert singularize("analysis") == "analysis"
    assert singularize("class") == "class"
    assert singularize("gas") == "gas"  # too short to touch


def test_term_frequencies_counts_and_accounting():
    pubs = [{"title": "The parsing of parsing models, 2020 A", "venue": "v", "year": 2000}]
    table = term_frequencies(pubs, "title", top_k=0, normalizer=identity_normalizer)
    assert dict(table.entries) == {"parsing": 2, "models": 1}
    # the/of/a: stopwords, 2020: all digits
    assert table.total_tokens == 7
    assert table.stopword_tokens == 3
    assert table.dropped_tokens == 1
    assert table.counted_tokens == 3
    assert table.total_tokens == (table.stopword_tokens + table.dropped_tokens
                                  + table.counted_tokens)


def test_term_frequencies_singularizes_by_default():
    pubs = [{"title": "models model", "venue": "v", "year": 2000}]
    table = term_frequencies(pubs, "title", top_k=0)
    assert dict(table.entries) == {"model": 2}


def test_term_frequencies_filters_and_ranks():
    pubs = [
        {"title": "alpha beta", "venue": "conf/a", "year": 2000},
        {"title": "alpha gamma", "venue": "conf/a", "year": 2001},
        {"title": "delta delta", "venue": "conf/b", "year": 2000},
    ]
    table = term_frequencies(pubs, "title", top_k=1, venue="conf/a",
                             normalizer=identity_normalizer)
    assert table.entries == [("alpha", 2)]
    by_year = term_frequencies(pubs, "title", top_k=0, venue="conf/a", year=2001,
                               normalizer=identity_normalizer)
    assert dict(by_year.entries) == {"alpha": 1, "gamma": 1}


def test_term_frequencies_reads_abstract_field():
    pubs = [{"title": "ignored", "ocr_abstract": "embeddings embeddings",
             "venue": "v", "year": 2000}]
    table = term_frequencies(pubs, "abstract", top_k=0)
    assert dict(table.entries) == {"embedding": 2}


def test_term_frequencies_unknown_field():
    with pytest.raises(ValueError):
        term_frequencies([{"title": "x y", "venue": "v", "year": 2000}], "venue")


def test_term_shift_union_and_zero_counts():
    pubs = [
        {"venue": "conf/a", "year": 2017, "ocr_abstract": "lstm lstm parsing"},
        {"venue": "conf/a", "year": 2021, "ocr_abstract": "transformer parsing"},
        {"venue": "conf/b", "year": 2021, "ocr_abstract": "noise"},
    ]
    rows = term_shift(pubs, "conf/a", "abstract", 2017, 2021,
                      normalizer=identity_normalizer)
    as_dict = {t: (a, b) for t, a, b in rows}
    assert as_dict["lstm"] == (2, 0)
    assert as_dict["transformer"] == (0, 1)
    assert as_dict["parsing"] == (1, 1)
    assert "noise" not in as_dict  # other venue
    # sorted by combined count descending, then term
    combined = [a + b for _, a, b in rows]
    assert combined == sorted(combined, reverse=True)


def test_term_shift_min_count_filter():
    pubs = [{"venue": "conf/a", "year": 2017, "ocr_abstract": "rare common common"},
            {"venue": "conf/a", "year": 2021, "ocr_abstract": "common"}]
    rows = term_shift(pubs, "conf/a", "abstract", 2017, 2021, min_count=2,
                      normalizer=identity_normalizer)
    assert [t for t, _, _ in rows] == ["common"]


# --- citation trends ------------------------------------------------------


def test_citation_trend_oracle():
    pubs = [{"id": "p1", "year": 2000}, {"id": "p2", "year": 2000},
            {"id": "p3", "year": 2001}, {"id": "p4", "year": None}]
    graph = CitationGraph(
        incoming={"p1": ["p3"], "p3": ["p1", "p2"]},
        outgoing={"p1": ["p3"], "p2": ["p3"], "p3": ["p1"]},
    )
    incoming, outgoing = citation_trend(pubs, graph)
    assert dict(incoming.points) == {2000: 0.5, 2001: 2.0}
    assert dict(outgoing.points) == {2000: 1.0, 2001: 1.0}
