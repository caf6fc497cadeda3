"""Chunked line-delimited entity store with an id index and atomic manifests.

Chunks are append-only JSONL files, sorted by id within each chunk. The
manifest is the single commit point: a chunk not referenced by the manifest
is invisible, so a crash mid-write never corrupts committed data. Records
written later supersede earlier records with the same id; deletions are
tombstones until an explicit compact.
"""
from __future__ import annotations

import gzip
import json
import logging
import os
import threading
from datetime import date
from pathlib import Path
from typing import Iterator

from .errors import DuplicateId, IoFailure
from .models import ChangeSet

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("publications", "authors", "venues", "affiliations", "citations", "fulltext")
MANIFEST = "manifest.json"


def _dump_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, ensure_ascii=False)


class Store:
    def __init__(self, root, create: bool = False):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST
        if manifest_path.exists():
            self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        elif create:
            self.root.mkdir(parents=True, exist_ok=True)
            self.manifest = {
                "schema_version": SCHEMA_VERSION,
                "kinds": {k: {"chunks": [], "tombstones": []} for k in KINDS},
            }
            self._commit_manifest()
        else:
            raise IoFailure(f"no store at {self.root}")
        # Single writer at a time; readers see only committed manifests.
        self._write_lock = threading.Lock()
        # id -> (chunk name, byte offset); later chunks win.
        self._index: dict[str, dict[str, tuple[str, int]]] = {}
        for kind in KINDS:
            self._load_index(kind)

    # -- internals ---------------------------------------------------------

    def _kind_dir(self, kind: str) -> Path:
        if kind not in KINDS:
            raise IoFailure(f"unknown entity kind {kind!r}")
        return self.root / kind

    def _kind_meta(self, kind: str) -> dict:
        return self.manifest["kinds"][kind]

    def _load_index(self, kind: str) -> None:
        index: dict[str, tuple[str, int]] = {}
        kdir = self._kind_dir(kind)
        for chunk in self._kind_meta(kind)["chunks"]:
            idx_path = kdir / (chunk["name"] + ".idx")
            offsets = json.loads(idx_path.read_text(encoding="utf-8"))
            for rec_id, offset in offsets.items():
                index[rec_id] = (chunk["name"], offset)
        for rec_id in self._kind_meta(kind)["tombstones"]:
            index.pop(rec_id, None)
        self._index[kind] = index

    def _commit_manifest(self) -> None:
        tmp = self.root / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(self.manifest, indent=1, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.root / MANIFEST)

    # -- write path --------------------------------------------------------

    def write_entities(self, kind: str, records: list[dict], chunk_size: int | None = None) -> dict:
        """Append records as one or more new chunks; returns the manifest delta.

        Ids must be unique within the call; ids already in the store are
        superseded by the new version.
        """
        with self._write_lock:
            return self._write_entities(kind, records, chunk_size)

    def _write_entities(self, kind: str, records: list[dict], chunk_size: int | None) -> dict:
        seen = set()
        for rec in records:
            if rec["id"] in seen:
                raise DuplicateId(rec["id"])
            seen.add(rec["id"])
        records = sorted(records, key=lambda r: r["id"])

        kdir = self._kind_dir(kind)
        kdir.mkdir(parents=True, exist_ok=True)
        meta = self._kind_meta(kind)
        new_chunks = []
        if chunk_size is None:
            chunk_size = max(len(records), 1)
        next_no = len(meta["chunks"]) + 1
        for start in range(0, len(records), chunk_size):
            batch = records[start:start + chunk_size]
            name = f"chunk-{next_no:06d}.jsonl"
            next_no += 1
            offsets = {}
            with open(kdir / name, "w", encoding="utf-8") as fh:
                for rec in batch:
                    offsets[rec["id"]] = fh.tell()
                    fh.write(_dump_record(rec) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            (kdir / (name + ".idx")).write_text(json.dumps(offsets), encoding="utf-8")
            new_chunks.append({"name": name, "count": len(batch)})
            for rec_id, offset in offsets.items():
                self._index[kind][rec_id] = (name, offset)

        meta["chunks"].extend(new_chunks)
        tombstones = set(meta["tombstones"]) - seen
        meta["tombstones"] = sorted(tombstones)
        self._commit_manifest()
        return {"kind": kind, "chunks": new_chunks, "count": len(records)}

    def remove(self, kind: str, ids: list[str]) -> None:
        with self._write_lock:
            meta = self._kind_meta(kind)
            tombstones = set(meta["tombstones"])
            for rec_id in ids:
                tombstones.add(rec_id)
                self._index[kind].pop(rec_id, None)
            meta["tombstones"] = sorted(tombstones)
            self._commit_manifest()

    def apply_changeset(self, cs: ChangeSet) -> dict:
        """Apply an ingest ChangeSet to the publications kind."""
        records = [p.to_record() for p in cs.added + cs.modified]
        if cs.removed:
            self.remove("publications", cs.removed)
        if records:
            self.write_entities("publications", records)
        return self.manifest

    def compact(self, kind: str | None = None) -> None:
        """Rewrite each kind to a single chunk holding only live records."""
        for k in ([kind] if kind else KINDS):
            live = list(self.scan(k))
            kdir = self._kind_dir(k)
            meta = self._kind_meta(k)
            for chunk in meta["chunks"]:
                (kdir / chunk["name"]).unlink(missing_ok=True)
                (kdir / (chunk["name"] + ".idx")).unlink(missing_ok=True)
            meta["chunks"] = []
            meta["tombstones"] = []
            self._index[k] = {}
            self._commit_manifest()
            if live:
                self.write_entities(k, live)

    # -- read path ---------------------------------------------------------

    def get(self, kind: str, rec_id: str) -> dict | None:
        entry = self._index[kind].get(rec_id)
        if entry is None:
            return None
        chunk_name, offset = entry
        with open(self._kind_dir(kind) / chunk_name, "r", encoding="utf-8") as fh:
            fh.seek(offset)
            return json.loads(fh.readline())

    def scan(self, kind: str) -> Iterator[dict]:
        """Live records in id order; streams with one open handle per chunk."""
        index = self._index[kind]
        handles: dict[str, object] = {}
        try:
            for rec_id in sorted(index):
                chunk_name, offset = index[rec_id]
                fh = handles.get(chunk_name)
                if fh is None:
                    fh = open(self._kind_dir(kind) / chunk_name, "r", encoding="utf-8")
                    handles[chunk_name] = fh
                fh.seek(offset)
                yield json.loads(fh.readline())
        finally:
            for fh in handles.values():
                fh.close()

    def count(self, kind: str) -> int:
        return len(self._index[kind])

    def ids(self, kind: str) -> list[str]:
        return sorted(self._index[kind])

    def mdate_index(self) -> dict[str, date]:
        """Publication key -> modified date, for release diffing."""
        return {
            rec["id"]: date.fromisoformat(rec["mdate"])
            for rec in self.scan("publications")
        }

    # -- export ------------------------------------------------------------

    def export(self, kind: str, out_path, compress: bool = False) -> int:
        """Write one concatenated JSONL file for a kind.

        Publications are joined with their citation records so the exported
        schema carries the full primary and secondary attribute set.
        """
        opener = gzip.open if compress else open
        n = 0
        with opener(out_path, "wt", encoding="utf-8") as fh:
            for rec in self.scan(kind):
                if kind == "publications":
                    cite = self.get("citations", rec["id"]) or {}
                    rec = dict(rec)
                    rec["incoming"] = cite.get("incoming", {"ids": [], "count": 0})
                    rec["outgoing"] = cite.get("outgoing", {"ids": [], "count": 0})
                fh.write(_dump_record(rec) + "\n")
                n += 1
        return n
