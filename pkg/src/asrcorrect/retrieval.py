"""Indexed search over task surface forms.

Candidate generation is lexical (an inverted token index); scoring is the
cosine similarity between embeddings. Any object with a ``dim`` attribute
and an ``embed(text) -> np.ndarray`` method can serve as the embedder.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .text import normalize, tokenize

log = logging.getLogger(__name__)

DEFAULT_DIM = 256
DEFAULT_TOP_K = 10
INDEX_MAGIC = b"ASRIDX\x00\x01"
INDEX_VERSION = 1


class RetrievalError(RuntimeError):
    """The embedding backend failed or a query was unusable."""


class IndexBuildError(ValueError):
    pass


class Embedder(Protocol):
    dim: int
    name: str

    def embed(self, text: str) -> np.ndarray: ...


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def char_trigrams(text: str) -> list[str]:
    padded = f" {normalize(text)} "
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


class TrigramEmbedder:
    """Hashed character-trigram term frequencies, L2-normalized.

    Hashing uses blake2b, so vectors are identical across processes and
    Python versions.
    """

    name = "trigram"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        if not normalize(text):
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram, tf in Counter(char_trigrams(text)).items():
            vec[self._bucket(gram)] += tf
        return vec / np.linalg.norm(vec)


class HttpEmbedder:
    """Client for an embedding service.

    POST ``{"texts": [...]}`` to ``endpoint``; the reply must be
    ``{"vectors": [[...], ...]}`` with one ``dim``-length vector per text.
    """

    name = "http"

    def __init__(self, endpoint: str, dim: int, timeout: float = 5.0):
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout
        self._cache: dict[str, np.ndarray] = {}

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        body = json.dumps({"texts": list(texts)}).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.load(resp)
        except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
            raise RetrievalError(f"embedding service {self.endpoint} failed: {exc}") from exc
        vectors = payload.get("vectors") if isinstance(payload, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise RetrievalError("embedding service returned a malformed response")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            norm = np.linalg.norm(arr)
            if arr.shape != (self.dim,) or norm == 0:
                raise RetrievalError(f"expected a non-zero vector of length {self.dim}")
            out.append(arr / norm)
        return out

    def embed(self, text: str) -> np.ndarray:
        if text not in self._cache:
            self._cache[text] = self.embed_many([text])[0]
        return self._cache[text]


@dataclass(frozen=True)
class TaskEntry:
    id: str
    canonical_text: str
    surface_forms: tuple[str, ...] = ()

    def __post_init__(self):
        forms = tuple(dict.fromkeys(self.surface_forms or (self.canonical_text,)))
        if self.canonical_text not in forms:
            forms = (self.canonical_text,) + forms
        object.__setattr__(self, "surface_forms", forms)

    def to_json(self) -> dict:
        return {"id": self.id, "canonical_text": self.canonical_text, "surface_forms": list(self.surface_forms)}

    @classmethod
    def from_json(cls, obj: dict) -> "TaskEntry":
        return cls(str(obj["id"]), obj["canonical_text"], tuple(obj.get("surface_forms") or ()))


@dataclass(frozen=True)
class ScoredResult:
    entry_id: str
    surface_form: str
    score: float


@dataclass
class SearchIndex:
    entries: list[TaskEntry]
    forms: list[str]  # surface forms, in build order
    form_entry: list[int]  # form index -> entry index
    vectors: np.ndarray  # float32, shape (len(forms), dim)
    inverted: dict[str, list[int]]  # token -> sorted form indices
    embedder: Embedder = field(repr=False)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def entry(self, entry_id: str) -> TaskEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)


def build_index(catalog: Iterable[TaskEntry], embedder: Embedder | None = None) -> SearchIndex:
    embedder = embedder or TrigramEmbedder()
    entries = list(catalog)
    if not entries:
        raise IndexBuildError("catalog is empty")
    seen_ids: set[str] = set()
    forms: list[str] = []
    form_entry: list[int] = []
    owner: dict[str, str] = {}
    for k, entry in enumerate(entries):
        if entry.id in seen_ids:
            raise IndexBuildError(f"duplicate task id {entry.id!r}")
        seen_ids.add(entry.id)
        for form in entry.surface_forms:
            key = normalize(form)
            if not key:
                raise IndexBuildError(f"task {entry.id!r} has an empty surface form")
            if key in owner:
                if owner[key] != entry.id:
                    log.warning("surface form %r already belongs to %s; skipped for %s", form, owner[key], entry.id)
                continue
            owner[key] = entry.id
            forms.append(key)
            form_entry.append(k)

    vectors = np.empty((len(forms), embedder.dim), dtype=np.float32)
    for i, form in enumerate(forms):
        vectors[i] = embedder.embed(form)
    inverted: dict[str, list[int]] = {}
    for i, form in enumerate(forms):
        for tok in dict.fromkeys(tokenize(form)):
            inverted.setdefault(tok, []).append(i)
    return SearchIndex(entries, forms, form_entry, vectors, inverted, embedder)


def search(
    index: SearchIndex, query: str, threshold: float = 0.0, k: int = DEFAULT_TOP_K
) -> list[ScoredResult]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = tokenize(query)
    if not tokens:
        raise RetrievalError("empty query")
    pool: set[int] = set()
    for tok in tokens:
        pool.update(index.inverted.get(tok, ()))
    candidates = sorted(pool) if pool else range(len(index.forms))
    qvec = index.embedder.embed(" ".join(tokens))
    results = []
    for i in candidates:
        # stored vectors are unit length; float32 storage keeps this within 1e-6,
        # so near-1 scores snap to an exact match
        score = float(np.dot(index.vectors[i].astype(np.float64), qvec))
        if score > 1.0 - 1e-6:
            score = 1.0
        score = max(-1.0, score)
        if score >= threshold:
            results.append(ScoredResult(index.entries[index.form_entry[i]].id, index.forms[i], score))
    results.sort(key=lambda r: (-r.score, r.entry_id, r.surface_form))
    return results[:k]


def hypothesis_score(results: Sequence[ScoredResult]) -> float:
    return max((r.score for r in results), default=0.0)


# -- persistence -------------------------------------------------------------
#
# magic | u32 header_len | header JSON | u32 len | entries JSON
#       | u32 len | forms JSON (text, entry index) | vectors (<f4, row-major)
#       | u32 len | postings JSON
# JSON sections are written with sorted keys and no whitespace so identical
# inputs give identical bytes.


def _dump(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def index_to_bytes(index: SearchIndex) -> bytes:
    header = {
        "version": INDEX_VERSION,
        "dim": index.dim,
        "n_entries": len(index.entries),
        "n_forms": len(index.forms),
        "n_tokens": len(index.inverted),
        "embedder": getattr(index.embedder, "name", "custom"),
    }
    sections = [
        _dump(header),
        _dump([e.to_json() for e in index.entries]),
        _dump([[f, e] for f, e in zip(index.forms, index.form_entry)]),
    ]
    out = bytearray(INDEX_MAGIC)
    for sec in sections:
        out += struct.pack("<I", len(sec)) + sec
    out += index.vectors.astype("<f4").tobytes()
    postings = _dump({tok: ids for tok, ids in sorted(index.inverted.items())})
    out += struct.pack("<I", len(postings)) + postings
    return bytes(out)


def index_from_bytes(data: bytes, embedder: Embedder | None = None) -> SearchIndex:
    if not data.startswith(INDEX_MAGIC):
        raise IndexBuildError("not an index file (bad magic)")
    pos = len(INDEX_MAGIC)

    def section():
        nonlocal pos
        (size,) = struct.unpack_from("<I", data, pos)
        pos += 4
        blob = data[pos : pos + size]
        pos += size
        return json.loads(blob.decode("utf-8"))

    header = section()
    if header.get("version") != INDEX_VERSION:
        raise IndexBuildError(f"unsupported index version {header.get('version')}")
    entries = [TaskEntry.from_json(e) for e in section()]
    form_rows = section()
    dim, n = header["dim"], header["n_forms"]
    nbytes = 4 * dim * n
    vectors = np.frombuffer(data, dtype="<f4", count=dim * n, offset=pos).reshape(n, dim).astype(np.float32)
    pos += nbytes
    inverted = {tok: list(ids) for tok, ids in section().items()}
    if embedder is None:
        if header.get("embedder") != "trigram":
            raise IndexBuildError(f"index built with {header.get('embedder')!r}; pass its embedder to load it")
        embedder = TrigramEmbedder(dim)
    if embedder.dim != dim:
        raise IndexBuildError(f"embedder dim {embedder.dim} does not match index dim {dim}")
    return SearchIndex(
        entries, [f for f, _ in form_rows], [e for _, e in form_rows], vectors, inverted, embedder
    )


def save_index(index: SearchIndex, path: str | Path) -> None:
    Path(path).write_bytes(index_to_bytes(index))


def load_index(path: str | Path, embedder: Embedder | None = None) -> SearchIndex:
    return index_from_bytes(Path(path).read_bytes(), embedder)
