"""Retrieval layer: chunking, hashed embeddings, per-role knowledge banks.

The embedder is intentionally self-contained (token n-gram hashing). It
gives stable vectors across processes and platforms, which keeps retrieval
fully reproducible without model downloads.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import RoleId
from .errors import BankNotBuilt, BankSealed, EmptyDocument

DEFAULT_CHUNK_SIZE = 800
DEFAULT_OVERLAP = 100
DEFAULT_DIM = 256

_SENTENCE_BREAK = re.compile(r"[.!?]\s|\n")
_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    start: int
    end: int


def chunk_text(
    text: str,
    doc_id: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[Chunk]:
    """Split text into overlapping windows with recorded offsets.

    A window prefers to end on a sentence break, but only when the break
    falls past the window midpoint; otherwise it cuts at chunk_size. The
    next window starts `overlap` characters before the previous end, so
    every character is covered and adjacent chunks share context.
    """
    if not text.strip():
        raise EmptyDocument(f"document {doc_id!r} has no content")
    if chunk_size <= 0 or overlap < 0 or overlap >= chunk_size:
        raise ValueError("need chunk_size > 0 and 0 <= overlap < chunk_size")
    chunks: list[Chunk] = []
    start = 0
    n = len(text)
    while start < n:
        hard_end = min(start + chunk_size, n)
        end = hard_end
        if hard_end < n:
            window = text[start:hard_end]
            breaks = [m.end() for m in _SENTENCE_BREAK.finditer(window)]
            mid = chunk_size // 2
            late = [b for b in breaks if b > mid]
            if late:
                end = start + late[-1]
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id}#{len(chunks):04d}",
                doc_id=doc_id,
                text=text[start:end],
                start=start,
                end=end,
            )
        )
        if end >= n:
            break
        start = max(end - overlap, start + 1)
    return chunks


class HashEmbedder:
    """Token n-gram hashing into a fixed-size bucket vector, L2-normalized.

    Uses blake2b so bucket assignment never varies between runs (unlike
    the interpreter's salted hash()).
    """

    def __init__(self, dim: int = DEFAULT_DIM, ngram: int = 2):
        self.dim = dim
        self.ngram = ngram

    def _buckets(self, text: str) -> Iterable[int]:
        tokens = _TOKEN.findall(text.lower())
        for n in range(1, self.ngram + 1):
            for i in range(len(tokens) - n + 1):
                gram = " ".join(tokens[i : i + n])
                digest = hashlib.blake2b(gram.encode(), digest_size=8).digest()
                yield int.from_bytes(digest, "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for b in self._buckets(text):
            vec[b] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


@dataclass(frozen=True)
class Hit:
    chunk: Chunk
    score: float


class KnowledgeBank:
    """An exact-scan vector index over chunks of reference material.

    Two-stage lifecycle: add documents, then build() seals the bank and
    computes the embedding matrix. Search is a brute-force cosine scan,
    top-k by score with ties broken by chunk_id.
    """

    def __init__(
        self,
        embedder: HashEmbedder | None = None,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_OVERLAP,
    ):
        self.embedder = embedder or HashEmbedder()
        self.chunk_size = chunk_size
        self.overlap = overlap
        self._chunks: list[Chunk] = []
        self._matrix: np.ndarray | None = None
        self._sealed = False

    @property
    def chunks(self) -> Sequence[Chunk]:
        return tuple(self._chunks)

    def add_document(self, doc_id: str, text: str) -> int:
        """Chunk and stage a document; returns the number of new chunks."""
        if self._sealed:
            raise BankSealed("bank is sealed; build() was already called")
        new = chunk_text(text, doc_id, self.chunk_size, self.overlap)
        self._chunks.extend(new)
        return len(new)

    def build(self) -> None:
        if self._sealed:
            raise BankSealed("bank is already built")
        rows = [self.embedder.embed(c.text) for c in self._chunks]
        self._matrix = (
            np.vstack(rows) if rows else np.zeros((0, self.embedder.dim))
        )
        self._sealed = True

    def search(self, query: str, k: int = 4) -> list[Hit]:
        if not self._sealed or self._matrix is None:
            raise BankNotBuilt("call build() before search()")
        if k <= 0 or not self._chunks:
            return []
        qvec = self.embedder.embed(query)
        scores = self._matrix @ qvec
        order = sorted(
            range(len(self._chunks)),
            key=lambda i: (-scores[i], self._chunks[i].chunk_id),
        )
        return [Hit(self._chunks[i], float(scores[i])) for i in order[:k]]


# --- knowledge document format ---

_FRONT_MATTER = re.compile(r"\A---\s*\n(.*?)\n---\s*\n", re.DOTALL)


@dataclass(frozen=True)
class KnowledgeDoc:
    doc_id: str
    body: str
    role: str = "all"  # a RoleId value, or "all" for shared material
    meta: Mapping[str, str] = field(default_factory=dict)


def parse_knowledge_doc(text: str, fallback_id: str) -> KnowledgeDoc:
    """Read a markdown doc with a key: value front-matter block."""
    meta: dict[str, str] = {}
    body = text
    m = _FRONT_MATTER.match(text)
    if m:
        body = text[m.end() :]
        for line in m.group(1).splitlines():
            if ":" in line:
                key, _, value = line.partition(":")
                meta[key.strip()] = value.strip()
    return KnowledgeDoc(
        doc_id=meta.get("doc_id", fallback_id),
        body=body,
        role=meta.get("role", "all"),
        meta=meta,
    )


def build_role_banks(
    docs: Iterable[KnowledgeDoc],
    embedder: HashEmbedder | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> dict[RoleId, KnowledgeBank]:
    """One bank per role; docs tagged role=all feed every bank."""
    docs = list(docs)
    banks: dict[RoleId, KnowledgeBank] = {}
    shared_embedder = embedder or HashEmbedder()
    for role in RoleId:
        bank = KnowledgeBank(shared_embedder, chunk_size, overlap)
        for doc in docs:
            if doc.role == "all" or doc.role == role.value:
                bank.add_document(doc.doc_id, doc.body)
        bank.build()
        banks[role] = bank
    return banks
