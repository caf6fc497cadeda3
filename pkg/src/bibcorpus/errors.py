"""Exception hierarchy shared across the toolkit."""


class BibcorpusError(Exception):
    """Base class for all domain errors raised by this package."""


# --- ingest ---------------------------------------------------------------

class MalformedXml(BibcorpusError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownEntity(BibcorpusError):
    def __init__(self, name):
        super().__init__(f"undeclared entity reference: &{name};")
        self.name = name


class MissingTitle(BibcorpusError):
    def __init__(self, key):
        super().__init__(f"record {key!r} has no title")
        self.key = key


class UnmappableKind(BibcorpusError):
    def __init__(self, key, kind):
        super().__init__(f"record {key!r} has kind {kind!r} with no publication type mapping")
        self.key = key
        self.kind = kind


class EmptyName(BibcorpusError):
    pass


# --- harvest --------------------------------------------------------------

class InvalidChunkSize(BibcorpusError):
    pass


class HttpError(BibcorpusError):
    def __init__(self, url, status):
        super().__init__(f"HTTP {status} for {url}")
        self.url = url
        self.status = status


class RetriesExhausted(BibcorpusError):
    def __init__(self, url):
        super().__init__(f"retry budget exhausted for {url}")
        self.url = url


class FetchTimeout(BibcorpusError):
    def __init__(self, url):
        super().__init__(f"timeout fetching {url}")
        self.url = url


class ExtractorUnavailable(BibcorpusError):
    pass


class ExtractionRejected(BibcorpusError):
    def __init__(self, reason):
        super().__init__(f"extraction rejected: {reason}")
        self.reason = reason


# --- align / citegraph ----------------------------------------------------

class InsufficientCorpus(BibcorpusError):
    pass


class LookupUnavailable(BibcorpusError):
    def __init__(self, pub_id):
        super().__init__(f"external citation lookup unavailable for {pub_id!r}")
        self.pub_id = pub_id


# --- analytics ------------------------------------------------------------

class InsufficientPoints(BibcorpusError):
    pass


class EmptyWindow(BibcorpusError):
    pass


# --- store ----------------------------------------------------------------

class DuplicateId(BibcorpusError):
    def __init__(self, record_id):
        super().__init__(f"duplicate record id {record_id!r} in batch")
        self.record_id = record_id


class IoFailure(BibcorpusError):
    pass
