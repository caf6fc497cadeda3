"""Fuzzy alignment of full-text metadata to catalog entities.

Author names extracted from PDFs are matched to the publication's author
list by normalized edit-distance similarity; affiliations are interned under
content-hash ids; a seeded bootstrap/permutation audit quantifies how often
the name matching goes wrong on gold-labelled fixtures.
"""
from __future__ import annotations

import hashlib
import logging
import threading
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientCorpus
from .models import Affiliation, AffiliationFields, FullTextMetadata, Publication, SecondaryMetadata

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.8


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            ))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """1 - normalized edit distance; two empty strings count as identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def normalize_match_name(name: str) -> str:
    """Aggressive normalization for OCR-adjacent strings.

    Lowercases, strips diacritics, collapses whitespace. Used only for
    matching, never for identity resolution.
    """
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return " ".join(stripped.lower().split())


@dataclass
class MatchResult:
    extracted_name: str
    author_id: str | None
    score: float


def match_author_names(
    extracted: list[str],
    candidates: list[tuple[str, str]],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[MatchResult]:
    """Greedy best-score assignment of extracted names to author candidates.

    Each candidate is claimed at most once; ties go to the earlier candidate
    in list order (author order on the publication). Scores below the
    threshold leave the name unmatched.
    """
    norm_extracted = [normalize_match_name(e) for e in extracted]
    norm_candidates = [normalize_match_name(c[1]) for c in candidates]
    pairs = []
    for ei, en in enumerate(norm_extracted):
        for ci, cn in enumerate(norm_candidates):
            pairs.append((similarity(en, cn), ei, ci))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))

    assigned: dict[int, tuple[str, float]] = {}
    claimed: set[int] = set()
    for score, ei, ci in pairs:
        if score < threshold:
            break
        if ei in assigned or ci in claimed:
            continue
        assigned[ei] = (candidates[ci][0], score)
        claimed.add(ci)

    results = []
    for ei, name in enumerate(extracted):
        if ei in assigned:
            author_id, score = assigned[ei]
            results.append(MatchResult(name, author_id, score))
        else:
            open_scores = [s for s, e, c in pairs if e == ei and c not in claimed]
            results.append(MatchResult(name, None, max(open_scores, default=0.0)))
    return results


# --- affiliation interning ------------------------------------------------


def _normalized_fields(fields: AffiliationFields) -> tuple:
    def norm(v):
        return " ".join(v.lower().split()) if v else None
    return (norm(fields.name), norm(fields.country), norm(fields.city),
            norm(fields.postcode), norm(fields.addressline))


def affiliation_id(fields: AffiliationFields) -> str:
    payload = "\x1f".join(v or "" for v in _normalized_fields(fields))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class AffiliationInterner:
    """Content-addressed affiliation registry; inserts are serialized."""

    def __init__(self):
        self._by_id: dict[str, Affiliation] = {}
        self._lock = threading.Lock()

    def intern(self, fields: AffiliationFields) -> str:
        aff_id = affiliation_id(fields)
        with self._lock:
            if aff_id not in self._by_id:
                self._by_id[aff_id] = Affiliation(id=aff_id, fields=fields)
        return aff_id

    def all(self) -> list[Affiliation]:
        with self._lock:
            return sorted(self._by_id.values(), key=lambda a: a.id)


def attach_affiliations(
    pub: Publication,
    metadata: FullTextMetadata,
    author_names: dict[str, str],
    interner: AffiliationInterner,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[list[tuple[str, str]], list[str]]:
    """Link extracted affiliation blocks to the publication's authors.

    Returns (author_id, affiliation_id) pairs for matched names and the list
    of extracted names that stayed unmatched (kept for the audit).
    """
    extracted = [author for author, _ in metadata.affiliation_blocks]
    candidates = [(aid, author_names.get(aid, "")) for aid in pub.author_ids]
    matches = match_author_names(extracted, candidates, threshold)
    links = []
    unmatched = []
    for match, (_, fields) in zip(matches, metadata.affiliation_blocks):
        if match.author_id is None:
            unmatched.append(match.extracted_name)
            continue
        links.append((match.author_id, interner.intern(fields)))
    return links, unmatched


def attach_abstract(pub: Publication, metadata: FullTextMetadata) -> Publication:
    """Copy extracted title/abstract/keywords into the secondary block."""
    pub.secondary = SecondaryMetadata(
        ocr_title=metadata.ocr_title,
        ocr_abstract=metadata.ocr_abstract,
        keywords=list(metadata.keywords),
    )
    return pub


# --- mismatch audit -------------------------------------------------------


@dataclass
class AuditRecord:
    """One gold-labelled publication for the matching audit."""

    publication_id: str
    extracted_names: list[str]
    candidates: list[tuple[str, str]]  # (author_id, fullname)
    gold_author_ids: list[str] = field(default_factory=list)  # aligned with extracted_names


@dataclass
class AuditConfig:
    sample_count: int = 20
    sample_size: int = 100
    seed: int = 0
    mode: str = "uniform"  # or "adversarial"
    threshold: float = DEFAULT_THRESHOLD
    permutations: int = 10_000


def _mean_best_similarity(record: AuditRecord) -> float:
    if not record.extracted_names:
        return 1.0
    sims = []
    for name in record.extracted_names:
        n = normalize_match_name(name)
        sims.append(max(
            (similarity(n, normalize_match_name(c[1])) for c in record.candidates),
            default=0.0,
        ))
    return sum(sims) / len(sims)


def _permutation_pvalue(evaluated: list[AuditRecord], observed_mismatches: int,
                        permutations: int, rng: np.random.Generator) -> float:
    """One-sided p for 'observed mismatch count is as low as random assignment'.

    Null model: each record's extracted names are assigned an injective
    random choice of its candidates. Records are grouped by shape so the
    resampling vectorizes.
    """
    groups: dict[tuple[int, int], list[np.ndarray]] = {}
    for rec in evaluated:
        k = len(rec.extracted_names)
        kp = len(rec.candidates)
        if k == 0 or kp == 0:
            continue
        cand_ids = [c[0] for c in rec.candidates]
        gold_idx = np.array(
            [cand_ids.index(g) if g in cand_ids else -1 for g in rec.gold_author_ids],
            dtype=np.int64,
        )
        groups.setdefault((k, kp), []).append(gold_idx)

    null_counts = np.zeros(permutations, dtype=np.int64)
    chunk = max(1, min(permutations, 2_000))
    for (k, kp), golds in groups.items():
        gold = np.stack(golds)  # (R, k)
        r = gold.shape[0]
        done = 0
        while done < permutations:
            p = min(chunk, permutations - done)
            # random injective assignment: first k slots of a random ordering
            order = np.argsort(rng.random((p, r, kp)), axis=2)[:, :, :k]
            mism = (order != gold[None, :, :]).sum(axis=(1, 2))
            null_counts[done:done + p] += mism
            done += p
    better_or_equal = int((null_counts <= observed_mismatches).sum())
    return (1 + better_or_equal) / (1 + permutations)


def mismatch_audit(corpus: list[AuditRecord], config: AuditConfig) -> tuple[float, float]:
    """Returns (mismatch_rate, p_value) for the configured sampling mode."""
    if len(corpus) < config.sample_size:
        raise InsufficientCorpus(
            f"need at least {config.sample_size} gold-labelled publications, "
            f"have {len(corpus)}"
        )
    rng = np.random.default_rng(config.seed)
    if config.mode == "uniform":
        evaluated: list[AuditRecord] = []
        for _ in range(config.sample_count):
            picks = rng.choice(len(corpus), size=config.sample_size, replace=False)
            evaluated.extend(corpus[i] for i in picks)
    elif config.mode == "adversarial":
        ranked = sorted(corpus, key=lambda r: (_mean_best_similarity(r), r.publication_id))
        evaluated = ranked[:config.sample_size]
    else:
        raise ValueError(f"unknown audit mode {config.mode!r}")

    total = 0
    mismatches = 0
    for rec in evaluated:
        results = match_author_names(rec.extracted_names, rec.candidates, config.threshold)
        for match, gold in zip(results, rec.gold_author_ids):
            total += 1
            if match.author_id != gold:
                mismatches += 1
    if total == 0:
        raise InsufficientCorpus("no extracted names in the evaluated sample")

    p_value = _permutation_pvalue(evaluated, mismatches, config.permutations, rng)
    return mismatches / total, p_value
