"""Stage orchestration on top of the store: ingest, align, audit, citegraph."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

from . import align as align_mod
from . import citegraph as cg
from .align import AuditConfig, AuditRecord, AffiliationInterner
from .ingest import (
    AuthorRegistry,
    VenueRegistry,
    apply_www_record,
    diff_release,
    normalize_publication,
    parse_dump,
)
from .errors import MissingTitle, UnmappableKind
from .models import Author, FullTextMetadata, Publication
from .store import Store

logger = logging.getLogger(__name__)


def ingest_dump(dump_path, store: Store, dtd_path=None, chunk_size: int | None = None,
                workers: int = 1) -> dict:
    """Parse a release and write publications, authors, and venues.

    Parsing is single-pass; normalization fans out over workers while the
    registries serialize id assignment.
    """
    authors = AuthorRegistry()
    venues = VenueRegistry()
    publications: list[dict] = []
    skipped = {"www": 0, "mastersthesis": 0, "errors": 0}

    raw_batch = []
    for record in parse_dump(dump_path, dtd_path=dtd_path):
        if record.element_kind == "www":
            apply_www_record(record, authors)
            skipped["www"] += 1
            continue
        if record.element_kind == "mastersthesis":
            # parsed but outside the seven-type publication taxonomy
            skipped["mastersthesis"] += 1
            continue
        raw_batch.append(record)

    def normalize(record):
        try:
            return normalize_publication(record, authors, venues)
        except (MissingTitle, UnmappableKind) as exc:
            logger.warning("skipping record: %s", exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            normalized = list(pool.map(normalize, raw_batch))
    else:
        normalized = [normalize(r) for r in raw_batch]
    for pub in normalized:
        if pub is None:
            skipped["errors"] += 1
        else:
            publications.append(pub.to_record())

    store.write_entities("publications", publications, chunk_size=chunk_size)
    store.write_entities("authors", [a.to_record() for a in authors.all()])
    store.write_entities("venues", [v.to_record() for v in venues.all()])
    return {"publications": len(publications), "authors": len(authors.all()),
            "venues": len(venues.all()), "skipped": skipped}


def diff_dump(dump_path, store: Store, dtd_path=None, apply: bool = True) -> dict:
    """Diff a new release against the store and (by default) apply it."""
    authors = AuthorRegistry()
    venues = VenueRegistry()
    new_pubs: list[Publication] = []
    for record in parse_dump(dump_path, dtd_path=dtd_path):
        if record.element_kind in ("www", "mastersthesis"):
            continue
        try:
            new_pubs.append(normalize_publication(record, authors, venues))
        except (MissingTitle, UnmappableKind) as exc:
            logger.warning("skipping record: %s", exc)
    cs = diff_release(store.mdate_index(), new_pubs)
    if apply:
        store.apply_changeset(cs)
        store.write_entities("authors", [a.to_record() for a in authors.all()])
        store.write_entities("venues", [v.to_record() for v in venues.all()])
    return {
        "added": len(cs.added),
        "modified": len(cs.modified),
        "removed": len(cs.removed),
        "applied": apply,
    }


def align_store(store: Store, threshold: float = align_mod.DEFAULT_THRESHOLD,
                workers: int = 1) -> dict:
    """Attach extracted metadata to publications and authors."""
    author_names = {rec["id"]: rec["fullname"] for rec in store.scan("authors")}
    interner = AffiliationInterner()
    updated_pubs: list[dict] = []
    author_affiliations: dict[str, set[str]] = {}
    unmatched_total = 0

    fulltext = [rec for rec in store.scan("fulltext") if rec.get("status") == "ok"]

    def process(rec):
        pub_rec = store.get("publications", rec["id"])
        if pub_rec is None:
            return None
        pub = Publication.from_record(pub_rec)
        metadata = FullTextMetadata.from_record(rec)
        align_mod.attach_abstract(pub, metadata)
        links, unmatched = align_mod.attach_affiliations(
            pub, metadata, author_names, interner, threshold)
        return pub.to_record(), links, len(unmatched)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(process, fulltext))
    else:
        outcomes = [process(rec) for rec in fulltext]

    for outcome in outcomes:
        if outcome is None:
            continue
        pub_rec, links, unmatched = outcome
        updated_pubs.append(pub_rec)
        unmatched_total += unmatched
        for author_id, aff_id in links:
            author_affiliations.setdefault(author_id, set()).add(aff_id)

    if updated_pubs:
        store.write_entities("publications", updated_pubs)
    affs = [a.to_record() for a in interner.all()]
    if affs:
        store.write_entities("affiliations", affs)
    updated_authors = []
    for author_id, aff_ids in sorted(author_affiliations.items()):
        rec = store.get("authors", author_id)
        if rec is None:
            continue
        author = Author.from_record(rec)
        author.affiliation_ids |= aff_ids
        updated_authors.append(author.to_record())
    if updated_authors:
        store.write_entities("authors", updated_authors)
    return {"aligned": len(updated_pubs), "affiliations": len(affs),
            "unmatched_names": unmatched_total}


def audit_records_from_store(store: Store, gold: dict | None = None) -> list[AuditRecord]:
    """Build audit inputs from harvested metadata plus optional gold labels.

    ``gold`` maps publication id to the list of correct author ids, aligned
    with the metadata's affiliation blocks.
    """
    author_names = {rec["id"]: rec["fullname"] for rec in store.scan("authors")}
    records = []
    for rec in store.scan("fulltext"):
        if rec.get("status") != "ok" or not rec.get("affiliations"):
            continue
        pub_rec = store.get("publications", rec["id"])
        if pub_rec is None:
            continue
        extracted = [a.get("author", "") for a in rec["affiliations"]]
        candidates = [(aid, author_names.get(aid, "")) for aid in pub_rec["authors"]]
        gold_ids = list((gold or {}).get(rec["id"], []))
        records.append(AuditRecord(
            publication_id=rec["id"],
            extracted_names=extracted,
            candidates=candidates,
            gold_author_ids=gold_ids,
        ))
    return records


def audit_store(store: Store, config: AuditConfig, gold: dict) -> dict:
    records = audit_records_from_store(store, gold)
    rate, p_value = align_mod.mismatch_audit(records, config)
    return {"rate": rate, "p_value": p_value, "mode": config.mode}


def build_citation_graph(store: Store, threshold: float = cg.DEFAULT_THRESHOLD) -> cg.CitationGraph:
    """Match all harvested bibliographies and persist the graph."""
    index = cg.build_title_index(store.scan("publications"))
    bibliographies = []
    for rec in store.scan("fulltext"):
        if rec.get("status") != "ok":
            continue
        metadata = FullTextMetadata.from_record(rec)
        bibliographies.append((metadata.publication_id, metadata.bib_entries))
    graph = cg.build_graph(bibliographies, index, threshold)
    store.write_entities("citations", graph.to_records(store.ids("publications")))
    return graph


def load_citation_graph(store: Store) -> cg.CitationGraph:
    return cg.CitationGraph.from_records(store.scan("citations"))
