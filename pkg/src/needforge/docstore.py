"""Document text lookup backed by a JSONL file or a directory of .txt files."""

from __future__ import annotations

import json
from pathlib import Path


class DocStoreError(KeyError):
    pass


class DocStore:
    def get(self, doc_id: str) -> str:
        raise NotImplementedError

    def __contains__(self, doc_id: str) -> bool:
        try:
            self.get(doc_id)
            return True
        except DocStoreError:
            return False


class DictDocStore(DocStore):
    def __init__(self, docs: dict[str, str]):
        self._docs = dict(docs)

    def get(self, doc_id: str) -> str:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise DocStoreError(f"unknown doc_id {doc_id!r}") from None


class JsonlDocStore(DictDocStore):
    """JSONL file of {"doc_id": ..., "text": ...} records, loaded eagerly."""

    def __init__(self, path: str | Path):
        docs: dict[str, str] = {}
        with open(path, encoding="utf-8", errors="replace") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                docs[str(rec["doc_id"])] = rec["text"]
        super().__init__(docs)


class DirectoryDocStore(DocStore):
    """Directory of <doc_id>.txt files, read lazily."""

    def __init__(self, path: str | Path):
        self._dir = Path(path)

    def get(self, doc_id: str) -> str:
        p = self._dir / f"{doc_id}.txt"
        if not p.is_file():
            raise DocStoreError(f"unknown doc_id {doc_id!r}")
        return p.read_text(encoding="utf-8", errors="replace")


def open_doc_store(path: str | Path) -> DocStore:
    p = Path(path)
    if p.is_dir():
        return DirectoryDocStore(p)
    return JsonlDocStore(p)
