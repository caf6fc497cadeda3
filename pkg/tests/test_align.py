"""Edit-distance, name matching, and mismatch-audit tests."""
import functools
import random

import pytest
from hypothesis import given, settings, strategies as st

from bibcorpus.align import (
    AffiliationInterner,
    AuditConfig,
    AuditRecord,
    affiliation_id,
    attach_abstract,
    attach_affiliations,
    levenshtein,
    match_author_names,
    mismatch_audit,
    normalize_match_name,
    similarity,
)
from bibcorpus.errors import InsufficientCorpus
from bibcorpus.models import (
    AffiliationFields,
    FullTextMetadata,
    PubType,
    Publication,
    SecondaryMetadata,
)
from datetime import date

short_text = st.text(alphabet="abcde ", max_size=8)


def oracle_distance(a: str, b: str) -> int:
    """Memoized recursive definition, independent of the iterative DP."""
    @functools.lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1,
                   d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


def test_known_distances():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("flaw", "lawn") == 2
    assert levenshtein("", "abc") == 3
    assert levenshtein("same", "same") == 0


@given(short_text, short_text)
def test_distance_matches_recursive_oracle(a, b):
    assert levenshtein(a, b) == oracle_distance(a, b)


@given(short_text, short_text, short_text)
def test_metric_axioms(a, b, c):
    assert levenshtein(a, b) >= 0
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, b) == levenshtein(b, a)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


@given(short_text, short_text)
def test_similarity_bounds(a, b):
    s = similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert (s == 1.0) == (a == b)


def test_similarity_of_two_empty_strings():
    assert similarity("", "") == 1.0


def test_normalize_match_name_strips_diacritics_and_case():
    assert normalize_match_name("  Saïf   M.  MOHAMMAD ") == "saif m. mohammad"
    assert normalize_match_name("Göran Surname") == "goran surname"


# --- greedy assignment ----------------------------------------------------


def test_exact_names_all_match():
    candidates = [("a1", "Ada One"), ("a2", "Ben Two"), ("a3", "Cara Three")]
    results = match_author_names(["Ben Two", "Cara Three", "Ada One"], candidates)
    assert [r.author_id for r in results] == ["a2", "a3", "a1"]
    assert all(r.score == 1.0 for r in results)


def test_below_threshold_stays_unmatched_with_best_score():
    results = match_author_names(["Zz Qq"], [("a1", "Ada One")], threshold=0.8)
    assert results[0].author_id is None
    assert results[0].score == similarity(normalize_match_name("Zz Qq"),
                                          normalize_match_name("Ada One"))


def test_greedy_prefers_higher_scoring_pair():
    # both extracted names are closest to the same candidate; the better one wins
    candidates = [("a1", "Ada Surname"), ("a2", "Bob Other")]
    results = match_author_names(["Ada Surname", "Ada Surnme"], candidates, threshold=0.5)
    assert results[0].author_id == "a1"
    assert results[1].author_id != "a1"


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_assignment_invariants(data):
    names = data.draw(st.lists(st.text(alphabet="abc ", min_size=1, max_size=6),
                               min_size=0, max_size=5))
    cands = data.draw(st.lists(st.text(alphabet="abc ", min_size=1, max_size=6),
                               min_size=0, max_size=5))
    threshold = data.draw(st.sampled_from([0.5, 0.8, 1.0]))
    candidates = [(f"a{i}", c) for i, c in enumerate(cands)]
    results = match_author_names(names, candidates, threshold)
    assert len(results) == len(names)
    claimed = [r.author_id for r in results if r.author_id is not None]
    assert len(claimed) == len(set(claimed))  # each candidate used at most once
    for r in results:
        if r.author_id is not None:
            assert r.score >= threshold


# --- affiliations ---------------------------------------------------------


def _fields(name, city=None):
    return AffiliationFields(name=name, country=None, city=city,
                             postcode=None, addressline=None)


def test_affiliation_id_normalizes_case_and_whitespace():
    assert affiliation_id(_fields("NRC  Canada")) == affiliation_id(_fields("nrc canada"))
    assert affiliation_id(_fields("NRC", "Ottawa")) != affiliation_id(_fields("NRC"))


def test_interner_deduplicates():
    interner = AffiliationInterner()
    a = interner.intern(_fields("NRC Canada"))
    b = interner.intern(_fields("nrc  canada"))
    assert a == b
    assert len(interner.all()) == 1


def _pub(author_ids):
    return Publication(id="p1", modified_date=date(2020, 1, 1), title="T",
                       pub_type=PubType.ARTICLE, author_ids=author_ids)


def test_attach_affiliations_links_and_reports_unmatched():
    meta = FullTextMetadata(
        publication_id="p1", ocr_title=None, ocr_abstract=None, keywords=[],
        affiliation_blocks=[("Ada One", _fields("NRC")), ("Nobody Here", _fields("X"))],
        bib_entries=[])
    interner = AffiliationInterner()
    links, unmatched = attach_affiliations(
        _pub(["a1"]), meta, {"a1": "Ada One"}, interner)
    assert [a for a, _ in links] == ["a1"]
    assert unmatched == ["Nobody Here"]


def test_attach_abstract_overwrites():
    pub = _pub(["a1"])
    pub.secondary = SecondaryMetadata(ocr_abstract="old")
    meta = FullTextMetadata(publication_id="p1", ocr_title="T2",
                            ocr_abstract="new", keywords=["k"],
                            affiliation_blocks=[], bib_entries=[])
    attach_abstract(pub, meta)
    assert pub.secondary.ocr_abstract == "new"
    assert pub.secondary.ocr_title == "T2"
    assert pub.secondary.keywords == ["k"]


# --- mismatch audit -------------------------------------------------------


def planted_records(n=100, corrupted=5):
    records = []
    bad = {round(i * n / corrupted) for i in range(corrupted)}
    for i in range(n):
        gold = f"Gold Person{i:03d}"
        decoy = f"Decoy Person{i:03d}"
        extracted = decoy if i in bad else gold
        records.append(AuditRecord(
            publication_id=f"p{i:03d}",
            extracted_names=[extracted],
            candidates=[(f"g{i}", gold), (f"d{i}", decoy)],
            gold_author_ids=[f"g{i}"],
        ))
    return records


@pytest.mark.parametrize("mode", ["uniform", "adversarial"])
def test_planted_rate_is_exact(mode):
    config = AuditConfig(mode=mode, seed=0)
    rate, p_value = mismatch_audit(planted_records(), config)
    assert rate == 0.05
    assert p_value < 0.001


def test_audit_is_seed_deterministic():
    config = AuditConfig(mode="uniform", seed=7)
    assert mismatch_audit(planted_records(), config) == \
        mismatch_audit(planted_records(), config)


def test_audit_requires_enough_records():
    with pytest.raises(InsufficientCorpus):
        mismatch_audit(planted_records(n=30, corrupted=1), AuditConfig())


def test_audit_rejects_unknown_mode():
    with pytest.raises(ValueError):
        mismatch_audit(planted_records(), AuditConfig(mode="bogus"))


def test_uniform_sampling_varies_with_larger_corpus():
    # sanity that sampling actually subsamples when the corpus is bigger
    records = planted_records(n=200, corrupted=10)
    rate, p_value = mismatch_audit(records, AuditConfig(mode="uniform", seed=1))
    assert 0.0 <= rate <= 0.2
    assert p_value < 0.001


def test_adversarial_mode_prefers_low_similarity_records():
    records = planted_records(n=200, corrupted=10)
    # make one record maximally adversarial: garbage extracted name
    records[0] = AuditRecord("p_garbage", ["Qqqq Zzzz"],
                             [("g", "Gold Person"), ("d", "Decoy Person")], ["g"])
    rate, _ = mismatch_audit(records, AuditConfig(mode="adversarial", seed=0))
    # the garbage record is in the worst-100 sample and cannot match
    assert rate >= 1 / 100
