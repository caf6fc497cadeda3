"""Polite full-text harvesting: chunk planning, per-domain limits, retrieval.

Full texts are downloaded into a working folder, handed to the extractor,
and deleted before the chunk completes; only extracted metadata is kept.
All HTTP goes through an injectable transport so tests run against a
scripted in-process server.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import urljoin, urlsplit

from .errors import (
    ExtractionRejected,
    ExtractorUnavailable,
    FetchTimeout,
    HttpError,
    InvalidChunkSize,
    RetriesExhausted,
)
from .models import AffiliationFields, BibEntry, FullTextMetadata

logger = logging.getLogger(__name__)

FALLBACK_BACKOFF = (1.0, 2.0, 4.0)  # used on 429/5xx without a Retry-After
MAX_RETRIES = 3
MAX_REDIRECTS = 5


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


# --- chunk planning -------------------------------------------------------


@dataclass
class ChunkPlan:
    chunk_index: int
    publication_ids: list[str]


def plan_chunks(ids: list[str], chunk_size: int) -> list[ChunkPlan]:
    """Partition ids into equally sized chunks, preserving input order."""
    if chunk_size < 1:
        raise InvalidChunkSize(f"chunk size must be >= 1, got {chunk_size}")
    return [
        ChunkPlan(i, ids[start:start + chunk_size])
        for i, start in enumerate(range(0, len(ids), chunk_size))
    ]


# --- per-domain politeness ------------------------------------------------


def domain_of(url: str) -> str:
    parts = urlsplit(url)
    return f"{parts.scheme}://{parts.netloc}"


class DomainLimiter:
    """Caps concurrent requests per domain and enforces cooldown windows.

    Safe to share across any number of worker threads. Cooldowns come from
    429 responses; acquire blocks until both a slot is free and the domain's
    cooldown has elapsed (timestamps from the injected clock).
    """

    def __init__(self, max_concurrent: int = 2, clock=None):
        self.max_concurrent = max_concurrent
        self._clock = clock or SystemClock()
        self._cond = threading.Condition()
        self._inflight: dict[str, int] = {}
        self._cooldown_until: dict[str, float] = {}
        # politeness audit trail: when set to a list, admissions and cooldown
        # installs are appended under the lock, in linearization order
        self.audit_log: list[tuple] | None = None

    def acquire(self, domain: str) -> None:
        while True:
            with self._cond:
                now = self._clock.now()
                cooldown = self._cooldown_until.get(domain, 0.0)
                if now >= cooldown and self._inflight.get(domain, 0) < self.max_concurrent:
                    self._inflight[domain] = self._inflight.get(domain, 0) + 1
                    if self.audit_log is not None:
                        self.audit_log.append(("admit", domain, now))
                    return
                wait = cooldown - now
            if wait > 0:
                self._clock.sleep(wait)
            else:
                with self._cond:
                    self._cond.wait(timeout=0.01)

    def release(self, domain: str) -> None:
        with self._cond:
            self._inflight[domain] = max(0, self._inflight.get(domain, 0) - 1)
            self._cond.notify_all()

    def start_cooldown(self, domain: str, until: float) -> None:
        with self._cond:
            current = self._cooldown_until.get(domain, 0.0)
            self._cooldown_until[domain] = max(current, until)
            if self.audit_log is not None:
                self.audit_log.append(("cooldown", domain, self._cooldown_until[domain]))

    def cooldown_until(self, domain: str) -> float:
        with self._cond:
            return self._cooldown_until.get(domain, 0.0)


# --- fetching -------------------------------------------------------------


def _httpx_transport(url: str, timeout: float):
    import httpx

    try:
        resp = httpx.get(url, timeout=timeout, follow_redirects=False)
    except httpx.TimeoutException:
        raise FetchTimeout(url) from None
    headers = {k.lower(): v for k, v in resp.headers.items()}
    return resp.status_code, headers, resp.content


def polite_get(url, limiter: DomainLimiter, clock=None, transport=None,
               timeout: float = 30.0):
    """GET under the domain limiter; returns (status, headers, body).

    Retries 429 and 5xx responses up to the retry budget, honoring the
    integer-seconds Retry-After header on 429 and falling back to
    exponential delays when the header is missing.
    """
    clock = clock or SystemClock()
    transport = transport or _httpx_transport
    redirects = 0
    attempt = 0
    while True:
        domain = domain_of(url)
        limiter.acquire(domain)
        try:
            status, headers, body = transport(url, timeout)
        finally:
            limiter.release(domain)

        if status in (301, 302, 303, 307, 308) and "location" in headers:
            redirects += 1
            if redirects > MAX_REDIRECTS:
                raise HttpError(url, status)
            url = urljoin(url, headers["location"])
            continue
        if status == 429:
            retry_after = headers.get("retry-after")
            if retry_after is not None and retry_after.strip().isdigit():
                delay = float(int(retry_after.strip()))
            else:
                delay = FALLBACK_BACKOFF[min(attempt, len(FALLBACK_BACKOFF) - 1)]
            limiter.start_cooldown(domain, clock.now() + delay)
        elif status >= 500:
            delay = FALLBACK_BACKOFF[min(attempt, len(FALLBACK_BACKOFF) - 1)]
            limiter.start_cooldown(domain, clock.now() + delay)
        elif status >= 400:
            raise HttpError(url, status)
        else:
            return status, headers, body

        attempt += 1
        if attempt > MAX_RETRIES:
            raise RetriesExhausted(url)


def fetch(url, limiter: DomainLimiter, clock=None, transport=None,
          timeout: float = 30.0) -> bytes:
    """Download one URL politely; returns the body bytes of the 200 response."""
    _, _, body = polite_get(url, limiter, clock=clock, transport=transport,
                            timeout=timeout)
    return body


def is_pdf_response(headers: dict, body: bytes) -> bool:
    content_type = headers.get("content-type", "")
    if "application/pdf" in content_type:
        return True
    return body[:4] == b"%PDF"


class _AnchorCollector(HTMLParser):
    def __init__(self):
        super().__init__()
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            for name, value in attrs:
                if name == "href" and value:
                    self.hrefs.append(value)


def resolve_pdf_url(links: list[str], page_fetcher) -> str | None:
    """Find a PDF URL among a publication's links.

    Direct PDF responses win; otherwise HTML landing pages are scanned for
    the first anchor that itself resolves to a PDF. Per-link failures are
    logged and skipped.
    """
    for link in links:
        try:
            status, headers, body = page_fetcher(link)
        except Exception as exc:
            logger.debug("link %s failed: %s", link, exc)
            continue
        if is_pdf_response(headers, body):
            return link
        if "text/html" not in headers.get("content-type", "html"):
            continue
        collector = _AnchorCollector()
        try:
            collector.feed(body.decode("utf-8", errors="replace"))
        except Exception:
            continue
        for href in collector.hrefs:
            target = urljoin(link, href)
            if not href.lower().endswith(".pdf"):
                continue
            try:
                status, headers, body = page_fetcher(target)
            except Exception as exc:
                logger.debug("anchor %s failed: %s", target, exc)
                continue
            if is_pdf_response(headers, body):
                return target
    return None


# --- extractor boundary ---------------------------------------------------


class FixtureExtractor:
    """Replays pre-recorded metadata keyed by publication id (sidecar JSON)."""

    def __init__(self, sidecar_path):
        self._records = {
            rec["id"]: rec
            for rec in json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
        }

    def extract(self, publication_id: str, pdf_bytes: bytes) -> FullTextMetadata:
        if pdf_bytes[:4] != b"%PDF":
            raise ExtractionRejected("input does not look like a PDF")
        rec = self._records.get(publication_id)
        if rec is None:
            raise ExtractionRejected(f"no recorded metadata for {publication_id}")
        return FullTextMetadata.from_record(rec)


class GrobidExtractor:
    """Adapter for a GROBID-compatible TEI extraction service.

    Production-only path; tests use FixtureExtractor.
    """

    def __init__(self, endpoint: str, timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def extract(self, publication_id: str, pdf_bytes: bytes) -> FullTextMetadata:
        import httpx

        try:
            resp = httpx.post(
                f"{self.endpoint}/api/processFulltextDocument",
                files={"input": (f"{publication_id}.pdf", pdf_bytes, "application/pdf")},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ExtractorUnavailable(str(exc)) from None
        if resp.status_code == 204 or not resp.content:
            raise ExtractionRejected("service returned no content")
        if resp.status_code != 200:
            raise ExtractionRejected(f"service status {resp.status_code}")
        return parse_tei(publication_id, resp.text)


def parse_tei(publication_id: str, tei_xml: str) -> FullTextMetadata:
    """Minimal TEI reader: title, abstract, keywords, affiliations, bib."""
    import xml.etree.ElementTree as ET

    ns = {"tei": "http://www.tei-c.org/ns/1.0"}
    try:
        root = ET.fromstring(tei_xml)
    except ET.ParseError as exc:
        raise ExtractionRejected(f"unparseable TEI: {exc}") from None

    def text_of(el):
        return " ".join("".join(el.itertext()).split()) if el is not None else None

    header = root.find(".//tei:teiHeader", ns)
    title = text_of(root.find(".//tei:titleStmt/tei:title", ns)) if header is not None else None
    abstract = text_of(root.find(".//tei:abstract", ns))
    keywords = [t for t in (text_of(k) for k in root.findall(".//tei:keywords//tei:term", ns)) if t]

    blocks = []
    for author in root.findall(".//tei:sourceDesc//tei:author", ns):
        name_el = author.find("tei:persName", ns)
        aff_el = author.find("tei:affiliation", ns)
        if name_el is None or aff_el is None:
            continue
        org = text_of(aff_el.find(".//tei:orgName", ns))
        if not org:
            continue
        address = aff_el.find(".//tei:address", ns)
        fields = AffiliationFields(
            name=org,
            country=text_of(address.find("tei:country", ns)) if address is not None else None,
            city=text_of(address.find("tei:settlement", ns)) if address is not None else None,
            postcode=text_of(address.find("tei:postCode", ns)) if address is not None else None,
            addressline=text_of(address.find("tei:addrLine", ns)) if address is not None else None,
        )
        blocks.append((text_of(name_el) or "", fields))

    bib = []
    for entry in root.findall(".//tei:listBibl/tei:biblStruct", ns):
        entry_title = text_of(entry.find(".//tei:title", ns))
        if not entry_title:
            continue
        authors = [t for t in (text_of(p) for p in entry.findall(".//tei:persName", ns)) if t]
        year = None
        date_el = entry.find(".//tei:date", ns)
        if date_el is not None:
            when = date_el.get("when", "")
            if when[:4].isdigit():
                year = int(when[:4])
        bib.append(BibEntry(raw_title=entry_title, raw_authors=authors, raw_year=year))

    return FullTextMetadata(
        publication_id=publication_id,
        ocr_title=title,
        ocr_abstract=abstract,
        keywords=keywords,
        affiliation_blocks=blocks,
        bib_entries=bib,
    )


def extract_metadata(publication_id: str, pdf_bytes: bytes, extractor) -> FullTextMetadata:
    return extractor.extract(publication_id, pdf_bytes)


# --- chunk harvesting -----------------------------------------------------


@dataclass
class HarvestReport:
    fetched: int = 0
    extracted: int = 0
    rejected: int = 0
    unreachable: int = 0
    errors: list[str] = field(default_factory=list)

    def merge(self, other: "HarvestReport") -> None:
        self.fetched += other.fetched
        self.extracted += other.extracted
        self.rejected += other.rejected
        self.unreachable += other.unreachable
        self.errors.extend(other.errors)


def harvest_chunk(chunk: ChunkPlan, store, limiter: DomainLimiter, extractor,
                  transport=None, clock=None, workdir=None,
                  max_parallel: int = 8) -> HarvestReport:
    """Fetch, extract, and persist metadata for every id in one chunk.

    Individual failures are folded into the report; after return the working
    directory holds no downloaded full texts.
    """
    clock = clock or SystemClock()
    workdir = Path(workdir) if workdir else Path(store.root) / "worktmp"
    workdir.mkdir(parents=True, exist_ok=True)
    report = HarvestReport()
    results: dict[str, dict] = {}
    lock = threading.Lock()

    def getter(url):
        return polite_get(url, limiter, clock=clock, transport=transport)

    def work(pub_id: str) -> None:
        pub = store.get("publications", pub_id)
        links = (pub or {}).get("links") or []
        pdf_path = workdir / (pub_id.replace("/", "_") + ".pdf")
        try:
            url = resolve_pdf_url(links, getter)
            if url is None:
                with lock:
                    report.unreachable += 1
                    results[pub_id] = {"id": pub_id, "status": "unreachable"}
                return
            _, _, body = getter(url)
            pdf_path.write_bytes(body)
            try:
                metadata = extract_metadata(pub_id, pdf_path.read_bytes(), extractor)
            except ExtractionRejected as exc:
                with lock:
                    report.fetched += 1
                    report.rejected += 1
                    results[pub_id] = {"id": pub_id, "status": "rejected",
                                       "reason": exc.reason}
                return
            with lock:
                report.fetched += 1
                report.extracted += 1
                results[pub_id] = metadata.to_record()
        except Exception as exc:
            with lock:
                report.unreachable += 1
                report.errors.append(f"{pub_id}: {exc}")
                results[pub_id] = {"id": pub_id, "status": "unreachable",
                                   "reason": str(exc)}
        finally:
            pdf_path.unlink(missing_ok=True)

    if chunk.publication_ids:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            list(pool.map(work, chunk.publication_ids))
        store.write_entities("fulltext", [results[i] for i in sorted(results)])
    return report


def harvest_store(store, chunk_size: int, workers: int, extractor,
                  transport=None, clock=None, limiter=None,
                  max_parallel: int = 8) -> HarvestReport:
    """Plan chunks over all publications without metadata and harvest them."""
    limiter = limiter or DomainLimiter()
    pending = [i for i in store.ids("publications")
               if store.get("fulltext", i) is None]
    chunks = plan_chunks(pending, chunk_size)
    total = HarvestReport()
    if not chunks:
        return total
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = pool.map(
            lambda c: harvest_chunk(c, store, limiter, extractor,
                                    transport=transport, clock=clock,
                                    max_parallel=max_parallel),
            chunks,
        )
        for rep in reports:
            total.merge(rep)
    return total
