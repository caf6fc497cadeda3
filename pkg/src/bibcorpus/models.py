"""Entity types and their line-record (JSON dict) representations.

The on-disk field names follow the published dataset schema: ``mdate`` for
the modified date, nested ``incoming``/``outgoing`` blocks with ``ids`` and
``count``, ``ocr_title``/``ocr_abstract`` for text extracted from PDFs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date


class PubType(enum.Enum):
    """The seven publication types; together they partition the corpus."""

    IN_PROCEEDINGS = "in proceedings"
    ARTICLE = "article"
    INFORMAL = "informal"
    PHD_THESIS = "phd thesis"
    IN_COLLECTION = "in collection"
    PROCEEDINGS = "proceedings"
    BOOK = "book"

    @property
    def label(self) -> str:
        return _PUB_TYPE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "PubType":
        return _PUB_TYPE_BY_LABEL[label]


# Display names as they appear in exported records.
_PUB_TYPE_LABELS = {
    PubType.IN_PROCEEDINGS: "Conference and Workshop Papers",
    PubType.ARTICLE: "Journal Articles",
    PubType.INFORMAL: "Informal Publications",
    PubType.PHD_THESIS: "PhD Theses",
    PubType.IN_COLLECTION: "Parts in Books or Collections",
    PubType.PROCEEDINGS: "Editorship",
    PubType.BOOK: "Books",
}
_PUB_TYPE_BY_LABEL = {v: k for k, v in _PUB_TYPE_LABELS.items()}


class Access(enum.Enum):
    OPEN = "open"
    CLOSED = "closed"
    UNKNOWN = "unknown"


class VenueType(enum.Enum):
    CONFERENCE_OR_WORKSHOP = "Conference or Workshop"
    JOURNAL = "Journal"
    OTHER = "Other"


RECORD_KINDS = (
    "article", "inproceedings", "proceedings", "book",
    "incollection", "phdthesis", "mastersthesis", "www",
)


@dataclass
class RawRecord:
    """One record element from the XML dump, fields in document order."""

    element_kind: str
    key: str
    mdate: date
    attributes: list[tuple[str, str]]
    extra: dict[str, str] = field(default_factory=dict)  # attr values like publtype

    def values(self, name: str) -> list[str]:
        return [v for k, v in self.attributes if k == name]

    def first(self, name: str) -> str | None:
        for k, v in self.attributes:
            if k == name:
                return v
        return None


@dataclass
class SecondaryMetadata:
    ocr_title: str | None = None
    ocr_abstract: str | None = None
    keywords: list[str] = field(default_factory=list)


@dataclass
class Publication:
    id: str
    modified_date: date
    title: str
    pub_type: PubType
    access: Access = Access.UNKNOWN
    pages: str | None = None
    year: int | None = None
    links: list[str] = field(default_factory=list)
    doi: str | None = None
    publisher: str | None = None
    author_ids: list[str] = field(default_factory=list)
    venue_id: str | None = None
    secondary: SecondaryMetadata | None = None

    def to_record(self) -> dict:
        sec = self.secondary or SecondaryMetadata()
        return {
            "id": self.id,
            "mdate": self.modified_date.isoformat(),
            "title": self.title,
            "pages": self.pages,
            "year": self.year,
            "type": self.pub_type.label,
            "access": self.access.value,
            "links": list(self.links),
            "doi": self.doi,
            "publisher": self.publisher,
            "authors": list(self.author_ids),
            "venue": self.venue_id,
            "keywords": list(sec.keywords),
            "ocr_title": sec.ocr_title,
            "ocr_abstract": sec.ocr_abstract,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Publication":
        sec = None
        if rec.get("ocr_title") or rec.get("ocr_abstract") or rec.get("keywords"):
            sec = SecondaryMetadata(
                ocr_title=rec.get("ocr_title"),
                ocr_abstract=rec.get("ocr_abstract"),
                keywords=list(rec.get("keywords") or []),
            )
        return cls(
            id=rec["id"],
            modified_date=date.fromisoformat(rec["mdate"]),
            title=rec["title"],
            pages=rec.get("pages"),
            year=rec.get("year"),
            pub_type=PubType.from_label(rec["type"]),
            access=Access(rec.get("access", "unknown")),
            links=list(rec.get("links") or []),
            doi=rec.get("doi"),
            publisher=rec.get("publisher"),
            author_ids=list(rec.get("authors") or []),
            venue_id=rec.get("venue"),
            secondary=sec,
        )


@dataclass
class Author:
    id: str
    fullname: str
    webpage: str | None = None
    affiliation_ids: set[str] = field(default_factory=set)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "fullname": self.fullname,
            "webpage": self.webpage,
            "affiliations": sorted(self.affiliation_ids),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Author":
        return cls(
            id=rec["id"],
            fullname=rec["fullname"],
            webpage=rec.get("webpage"),
            affiliation_ids=set(rec.get("affiliations") or []),
        )


@dataclass
class Venue:
    id: str  # the venue code, e.g. "conf/lrec"
    names: list[str] = field(default_factory=list)
    acronyms: list[str] = field(default_factory=list)
    venue_type: VenueType = VenueType.OTHER

    @property
    def code(self) -> str:
        return self.id

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "names": list(self.names),
            "acronyms": list(self.acronyms),
            "type": self.venue_type.value,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Venue":
        return cls(
            id=rec["id"],
            names=list(rec.get("names") or []),
            acronyms=list(rec.get("acronyms") or []),
            venue_type=VenueType(rec["type"]),
        )


@dataclass
class AffiliationFields:
    name: str
    country: str | None = None
    city: str | None = None
    postcode: str | None = None
    addressline: str | None = None


@dataclass
class Affiliation:
    id: str  # content hash of the normalized fields
    fields: AffiliationFields

    def to_record(self) -> dict:
        f = self.fields
        return {
            "id": self.id,
            "name": f.name,
            "country": f.country,
            "city": f.city,
            "postcode": f.postcode,
            "addressline": f.addressline,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Affiliation":
        return cls(
            id=rec["id"],
            fields=AffiliationFields(
                name=rec["name"],
                country=rec.get("country"),
                city=rec.get("city"),
                postcode=rec.get("postcode"),
                addressline=rec.get("addressline"),
            ),
        )


@dataclass
class BibEntry:
    raw_title: str
    raw_authors: list[str] = field(default_factory=list)
    raw_year: int | None = None


@dataclass
class FullTextMetadata:
    """Structured output of the full-text extractor for one publication."""

    publication_id: str
    ocr_title: str | None = None
    ocr_abstract: str | None = None
    keywords: list[str] = field(default_factory=list)
    affiliation_blocks: list[tuple[str, AffiliationFields]] = field(default_factory=list)
    bib_entries: list[BibEntry] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "id": self.publication_id,
            "status": "ok",
            "ocr_title": self.ocr_title,
            "ocr_abstract": self.ocr_abstract,
            "keywords": list(self.keywords),
            "affiliations": [
                {
                    "author": author,
                    "name": f.name,
                    "country": f.country,
                    "city": f.city,
                    "postcode": f.postcode,
                    "addressline": f.addressline,
                }
                for author, f in self.affiliation_blocks
            ],
            "bib": [
                {"title": b.raw_title, "authors": list(b.raw_authors), "year": b.raw_year}
                for b in self.bib_entries
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FullTextMetadata":
        return cls(
            publication_id=rec["id"],
            ocr_title=rec.get("ocr_title"),
            ocr_abstract=rec.get("ocr_abstract"),
            keywords=list(rec.get("keywords") or []),
            affiliation_blocks=[
                (
                    a.get("author", ""),
                    AffiliationFields(
                        name=a["name"],
                        country=a.get("country"),
                        city=a.get("city"),
                        postcode=a.get("postcode"),
                        addressline=a.get("addressline"),
                    ),
                )
                for a in rec.get("affiliations") or []
            ],
            bib_entries=[
                BibEntry(
                    raw_title=b["title"],
                    raw_authors=list(b.get("authors") or []),
                    raw_year=b.get("year"),
                )
                for b in rec.get("bib") or []
            ],
        )


@dataclass
class ChangeSet:
    added: list[Publication] = field(default_factory=list)
    modified: list[Publication] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.added or self.modified or self.removed)
