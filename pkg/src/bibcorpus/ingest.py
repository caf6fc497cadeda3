"""Streaming ingest of DBLP-style XML releases.

parse_dump walks the dump with expat, holding at most one record in memory.
Accented-character entities come from the release's DTD: when the document's
DOCTYPE references it, the external subset is parsed so expat can expand the
references itself.
"""
from __future__ import annotations

import gzip
import hashlib
import logging
import re
import threading
import xml.parsers.expat as expat
from collections import deque
from datetime import date
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import EmptyName, MalformedXml, MissingTitle, UnknownEntity, UnmappableKind
from .models import (
    Author,
    ChangeSet,
    Publication,
    PubType,
    RawRecord,
    RECORD_KINDS,
    Venue,
    VenueType,
    Access,
)

logger = logging.getLogger(__name__)

_RECORD_ATTR_KEYS = ("publtype", "cdate")
_ENTITY_DECL_RE = re.compile(r"<!ENTITY\s+(\w+)\s+\"([^\"]*)\"\s*>")


def _open_source(source) -> IO[bytes]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        fh = open(path, "rb")
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            return gzip.open(fh)
        return fh
    return source


class _RecordBuilder:
    """Expat callback target that accumulates one record at a time."""

    def __init__(self, dtd_text: str | None):
        self.dtd_text = dtd_text
        self.records: deque[RawRecord] = deque()
        self.depth = 0
        self.kind: str | None = None
        self.key = ""
        self.mdate = ""
        self.extra: dict = {}
        self.pairs: list[tuple[str, str]] = []
        self.field_name: str | None = None
        self.field_depth = 0
        self.text_parts: list[str] = []

        p = expat.ParserCreate()
        p.buffer_text = True
        p.SetParamEntityParsing(expat.XML_PARAM_ENTITY_PARSING_ALWAYS)
        p.StartElementHandler = self._start
        p.EndElementHandler = self._end
        p.CharacterDataHandler = self._chars
        p.ExternalEntityRefHandler = self._external_entity
        p.SkippedEntityHandler = self._skipped_entity
        self.parser = p

    def _external_entity(self, context, base, system_id, public_id):
        if self.dtd_text is None:
            # No DTD available; undeclared references surface as skipped
            # entities below.
            return 1
        sub = self.parser.ExternalEntityParserCreate(context)
        sub.Parse(self.dtd_text, True)
        return 1

    def _skipped_entity(self, name, is_parameter_entity):
        if not is_parameter_entity:
            raise UnknownEntity(name)

    def _start(self, name, attrs):
        if self.depth == 1:
            if name in RECORD_KINDS:
                self.kind = name
                self.key = attrs.get("key", "")
                self.mdate = attrs.get("mdate", "")
                self.extra = {k: attrs[k] for k in _RECORD_ATTR_KEYS if k in attrs}
                self.extra["ee_types"] = []
                self.pairs = []
        elif self.depth == 2 and self.kind is not None:
            self.field_name = name
            self.field_depth = self.depth
            self.text_parts = []
            if name == "ee":
                self.extra["ee_types"].append(attrs.get("type"))
        self.depth += 1

    def _chars(self, data):
        if self.field_name is not None:
            self.text_parts.append(data)

    def _end(self, name):
        self.depth -= 1
        if self.depth == self.field_depth and self.field_name is not None:
            self.pairs.append((self.field_name, "".join(self.text_parts)))
            self.field_name = None
        elif self.depth == 1 and self.kind is not None:
            self.records.append(self._finish())
            self.kind = None

    def _finish(self) -> RawRecord:
        if not self.key:
            raise MalformedXml(
                f"record <{self.kind}> without a key attribute",
                line=self.parser.CurrentLineNumber,
                column=self.parser.CurrentColumnNumber,
            )
        try:
            mdate = date.fromisoformat(self.mdate)
        except ValueError:
            raise MalformedXml(
                f"record {self.key!r} has unparseable mdate {self.mdate!r}",
                line=self.parser.CurrentLineNumber,
            ) from None
        return RawRecord(
            element_kind=self.kind,
            key=self.key,
            mdate=mdate,
            attributes=self.pairs,
            extra=self.extra,
        )


def _load_dtd(dtd_path, source) -> str | None:
    if dtd_path is not None:
        return Path(dtd_path).read_text(encoding="utf-8")
    if isinstance(source, (str, Path)):
        candidates = sorted(Path(source).resolve().parent.glob("*.dtd"))
        if candidates:
            return candidates[0].read_text(encoding="utf-8")
    return None


def parse_dump(source, dtd_path=None) -> Iterator[RawRecord]:
    """Yield RawRecords from a dump file path, or a binary stream.

    Memory stays bounded by the largest single record. Raises MalformedXml
    on structural errors and UnknownEntity on undeclared references.
    """
    dtd_text = _load_dtd(dtd_path, source)
    builder = _RecordBuilder(dtd_text)
    stream = _open_source(source)
    try:
        while True:
            chunk = stream.read(64 * 1024)
            try:
                builder.parser.Parse(chunk, not chunk)
            except expat.ExpatError as exc:
                # expat reports an undeclared reference before the skipped
                # entity handler runs when there is no DTD at all
                if exc.code == expat.errors.codes[expat.errors.XML_ERROR_UNDEFINED_ENTITY]:
                    match = re.search(rb"&(\w+);", chunk)
                    name = match.group(1).decode("ascii", "replace") if match else "?"
                    raise UnknownEntity(name) from None
                raise MalformedXml(str(exc), line=exc.lineno, column=exc.offset) from None
            while builder.records:
                yield builder.records.popleft()
            if not chunk:
                break
    finally:
        if stream is not source:
            stream.close()


def parse_dtd_entities(dtd_text: str) -> dict[str, str]:
    """Entity name -> replacement text, from the internal declarations."""
    return {m.group(1): m.group(2) for m in _ENTITY_DECL_RE.finditer(dtd_text)}


# --- author / venue registries -------------------------------------------


def normalize_person_name(fullname: str) -> str:
    # Minimal on purpose: collapsing case or diacritics here could merge
    # distinct people. Homonym counter suffixes ("0001") stay part of the key.
    return " ".join(fullname.split())


def _digest_id(prefix: str, key: str) -> str:
    return prefix + hashlib.sha1(key.encode("utf-8")).hexdigest()[:16]


class AuthorRegistry:
    """Normalized fullname -> stable author entity; insertions serialized."""

    def __init__(self):
        self._by_name: dict[str, Author] = {}
        self._lock = threading.Lock()

    def resolve(self, fullname: str) -> str:
        name = normalize_person_name(fullname)
        if not name:
            raise EmptyName("author name is empty after whitespace normalization")
        with self._lock:
            author = self._by_name.get(name)
            if author is None:
                author = Author(id=_digest_id("a", name), fullname=name)
                self._by_name[name] = author
            return author.id

    def set_webpage(self, fullname: str, url: str) -> None:
        author_id = self.resolve(fullname)
        with self._lock:
            for author in self._by_name.values():
                if author.id == author_id and author.webpage is None:
                    author.webpage = url

    def all(self) -> list[Author]:
        with self._lock:
            return sorted(self._by_name.values(), key=lambda a: a.id)


class VenueRegistry:
    """Venue code -> venue entity; the code doubles as the id."""

    def __init__(self):
        self._by_code: dict[str, Venue] = {}
        self._lock = threading.Lock()

    def resolve(self, code: str) -> str:
        code = code.strip()
        if not code:
            raise EmptyName("venue code is empty")
        with self._lock:
            venue = self._by_code.get(code)
            if venue is None:
                venue = Venue(id=code, venue_type=_venue_type_for_code(code))
                self._by_code[code] = venue
            return venue.id

    def add_name(self, code: str, name: str, acronym: bool = False) -> None:
        self.resolve(code)
        with self._lock:
            venue = self._by_code[code]
            target = venue.acronyms if acronym else venue.names
            if name and name not in target:
                target.append(name)

    def all(self) -> list[Venue]:
        with self._lock:
            return sorted(self._by_code.values(), key=lambda v: v.id)


def _venue_type_for_code(code: str) -> VenueType:
    if code.startswith("conf/"):
        return VenueType.CONFERENCE_OR_WORKSHOP
    if code.startswith("journals/"):
        return VenueType.JOURNAL
    return VenueType.OTHER


def resolve_author(fullname: str, registry: AuthorRegistry) -> str:
    return registry.resolve(fullname)


def resolve_venue(code: str, registry: VenueRegistry) -> str:
    return registry.resolve(code)


# --- normalization --------------------------------------------------------

_KIND_TO_TYPE = {
    "article": PubType.ARTICLE,
    "inproceedings": PubType.IN_PROCEEDINGS,
    "proceedings": PubType.PROCEEDINGS,
    "book": PubType.BOOK,
    "incollection": PubType.IN_COLLECTION,
    "phdthesis": PubType.PHD_THESIS,
}

_INFORMAL_FLAGS = {"informal", "informal withdrawn"}
_DOI_RE = re.compile(r"https?://(?:dx\.)?doi\.org/(.+)$")


def venue_code_for_key(key: str) -> str | None:
    parts = key.split("/")
    if len(parts) >= 3 and parts[0] in ("conf", "journals", "series"):
        return "/".join(parts[:2])
    return None


def normalize_publication(
    record: RawRecord,
    author_registry: AuthorRegistry,
    venue_registry: VenueRegistry,
) -> Publication:
    """Map a raw record to a Publication, resolving authors and venue."""
    if record.element_kind not in _KIND_TO_TYPE:
        raise UnmappableKind(record.key, record.element_kind)
    if record.extra.get("publtype") in _INFORMAL_FLAGS:
        pub_type = PubType.INFORMAL
    else:
        pub_type = _KIND_TO_TYPE[record.element_kind]

    title = record.first("title")
    if not title or not title.strip():
        raise MissingTitle(record.key)

    year = None
    year_text = record.first("year")
    if year_text and year_text.strip().isdigit():
        year = int(year_text.strip())

    links = record.values("ee")
    ee_types = record.extra.get("ee_types", [])
    if any(t == "oa" for t in ee_types):
        access = Access.OPEN
    elif links:
        access = Access.CLOSED
    else:
        access = Access.UNKNOWN

    doi = None
    for link in links:
        m = _DOI_RE.match(link)
        if m:
            doi = m.group(1)
            break

    author_ids = []
    for name in record.values("author"):
        author_id = author_registry.resolve(name)
        if author_id not in author_ids:
            author_ids.append(author_id)

    venue_id = None
    code = venue_code_for_key(record.key)
    if code:
        venue_id = venue_registry.resolve(code)
        journal = record.first("journal")
        if journal:
            venue_registry.add_name(code, journal.strip())
        booktitle = record.first("booktitle")
        if booktitle:
            # In dump records the booktitle carries the short venue name.
            venue_registry.add_name(code, booktitle.strip(), acronym=True)
        if record.element_kind == "proceedings":
            venue_registry.add_name(code, title.strip())

    return Publication(
        id=record.key,
        modified_date=record.mdate,
        title=title.strip(),
        pages=record.first("pages"),
        year=year,
        pub_type=pub_type,
        access=access,
        links=links,
        doi=doi,
        publisher=(record.first("publisher") or None),
        author_ids=author_ids,
        venue_id=venue_id,
    )


def apply_www_record(record: RawRecord, registry: AuthorRegistry) -> None:
    """Feed author webpage URLs from homepage records into the registry."""
    if not record.key.startswith("homepages/"):
        return
    url = record.first("url")
    if not url:
        return
    for name in record.values("author"):
        if name.strip():
            registry.set_webpage(name, url.strip())


# --- release diffing ------------------------------------------------------


def diff_release(old_index: dict[str, date], new_records: Iterable[Publication]) -> ChangeSet:
    """Compare a key->mdate index of the previous release against new records."""
    cs = ChangeSet()
    seen = set()
    for pub in new_records:
        seen.add(pub.id)
        old_mdate = old_index.get(pub.id)
        if old_mdate is None:
            cs.added.append(pub)
        elif pub.modified_date > old_mdate:
            cs.modified.append(pub)
    cs.removed = sorted(k for k in old_index if k not in seen)
    return cs
