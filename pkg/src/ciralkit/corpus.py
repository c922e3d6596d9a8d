"""Document collections and the shared analyzer."""

from __future__ import annotations

import json
import re
import sys
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

LANGS = ("ha", "so", "sw", "yo", "en")


class CorpusError(ValueError):
    """Raised for malformed corpus files."""


@dataclass(frozen=True)
class Document:
    docid: str
    text: str
    lang: str

    def __post_init__(self) -> None:
        if not self.docid:
            raise CorpusError("docid must be non-empty")
        if self.lang not in LANGS:
            raise CorpusError(f"unsupported lang {self.lang!r} for {self.docid!r}")

    def to_json(self) -> str:
        return json.dumps(
            {"docid": self.docid, "text": self.text, "lang": self.lang},
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class Collection:
    """Immutable ordered set of documents with docid lookup."""

    docs: tuple[Document, ...] = ()
    _ordinals: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordinals: dict[str, int] = {}
        for i, doc in enumerate(self.docs):
            if doc.docid in ordinals:
                raise CorpusError(f"duplicate docid {doc.docid!r}")
            ordinals[doc.docid] = i
        object.__setattr__(self, "_ordinals", ordinals)

    @classmethod
    def from_docs(cls, docs: Iterable[Document]) -> "Collection":
        return cls(tuple(docs))

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.docs)

    def __getitem__(self, i: int) -> Document:
        return self.docs[i]

    def __contains__(self, docid: object) -> bool:
        return docid in self._ordinals

    def lookup(self, docid: str) -> int:
        return self._ordinals[docid]

    def get(self, docid: str) -> Document:
        return self.docs[self._ordinals[docid]]

    @property
    def docids(self) -> list[str]:
        return [d.docid for d in self.docs]


def load_jsonl(path: str | Path) -> Collection:
    """Read a JSONL corpus (one ``{"docid", "text", "lang"}`` record per line)."""
    docs: list[Document] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(str(rec["docid"]), rec["text"], rec["lang"])
                if not isinstance(doc.text, str):
                    raise TypeError("text must be a string")
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed record ({exc})") from exc
            if doc.docid in seen:
                raise CorpusError(
                    f"{path}: line {lineno}: duplicate docid {doc.docid!r} "
                    f"(first seen on line {seen[doc.docid]})"
                )
            seen[doc.docid] = lineno
            docs.append(doc)
    return Collection(tuple(docs))


def write_jsonl(collection: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in collection:
            fh.write(doc.to_json())
            fh.write("\n")


def _punctuation_class() -> str:
    chars = [
        chr(cp)
        for cp in range(sys.maxunicode + 1)
        if unicodedata.category(chr(cp)).startswith("P")
    ]
    return "".join(re.escape(c) for c in chars)


# Separators: Unicode whitespace plus every codepoint in a P* category.
_SPLIT = re.compile(r"[\s" + _punctuation_class() + r"]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation.

    >>> tokenize("President Buhari's leadership")
    ['president', 'buhari', 's', 'leadership']
    """
    return [t for t in _SPLIT.split(text.lower()) if t]
