"""Offline context augmentation.

* map public task titles onto the private catalog by embedding similarity,
* cluster the mapped titles and ask a generator for paraphrases of each
  cluster representative, which inherit the representative's task,
* expand presented options with n-grams that identify exactly one option,
* merge the engine's top result into a default retrieval list.

Nothing here runs at correction time.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .retrieval import Embedder, TaskEntry, TrigramEmbedder
from .text import normalize, tokenize

log = logging.getLogger(__name__)

ORIGINAL = "original"
PUBLIC_MAPPED = "public-mapped"
GENERATED = "generated"

STOP_PATTERN = frozenset({"how", "to", "a", "the", "of", "for"})


class AugmentError(RuntimeError):
    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class GeneratorError(RuntimeError):
    pass


# -- catalog files ------------------------------------------------------------


def read_catalog(path: str | Path) -> list[TaskEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entries.append(TaskEntry.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad catalog record ({exc})") from exc
    return entries


def write_catalog(entries: Iterable[TaskEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


# -- variation map ------------------------------------------------------------


@dataclass
class VariationMap:
    mapping: dict[str, str] = field(default_factory=dict)  # surface text -> task id
    provenance: dict[str, str] = field(default_factory=dict)

    def add(self, text: str, task_id: str, source: str) -> bool:
        key = normalize(text)
        if not key or key in self.mapping:
            return False
        self.mapping[key] = task_id
        self.provenance[key] = source
        return True

    def counts(self) -> dict[str, int]:
        out = {ORIGINAL: 0, PUBLIC_MAPPED: 0, GENERATED: 0}
        for src in self.provenance.values():
            out[src] += 1
        return out


def map_public_to_private(
    public: Sequence[str],
    private: Sequence[TaskEntry],
    embedder: Embedder | None = None,
    sim_threshold: float = 0.5,
) -> VariationMap:
    """Pair each public title with its nearest private task and keep the
    pair when the cosine similarity exceeds ``sim_threshold``.

    Exact embedding matches (cosine 1) are always kept, so a threshold of
    1.0 keeps only those.
    """
    embedder = embedder or TrigramEmbedder()
    vmap = VariationMap()
    if not public or not private:
        return vmap
    priv = np.stack([embedder.embed(e.canonical_text) for e in private])
    for x in public:
        if not normalize(x):
            continue
        sims = priv @ embedder.embed(x)
        j = int(np.argmax(sims))  # first maximum on ties
        s = float(sims[j])
        if s > sim_threshold or s >= 1.0 - 1e-9:
            vmap.add(x, private[j].id, PUBLIC_MAPPED)
    return vmap


# -- clustering -----------------------------------------------------------------


def cluster_centroids(
    texts: Sequence[str],
    embedder: Embedder | None = None,
    n_clusters: int = 8,
    seed: int = 0,
    max_iter: int = 100,
) -> list[str]:
    """k-means over embeddings; returns the member nearest each cluster mean.

    Initialization is farthest-first from a seeded random start, which makes
    the result a pure function of (texts, n_clusters, seed).
    """
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n_clusters > len(texts):
        raise ValueError(f"n_clusters={n_clusters} exceeds the {len(texts)} available texts")
    embedder = embedder or TrigramEmbedder()
    X = np.stack([embedder.embed(t) for t in texts])
    rng = random.Random(seed)

    chosen = [rng.randrange(len(texts))]
    dist = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < n_clusters:
        masked = dist.copy()
        masked[chosen] = -1.0
        nxt = int(np.argmax(masked))
        chosen.append(nxt)
        dist = np.minimum(dist, ((X - X[nxt]) ** 2).sum(axis=1))
    centers = X[chosen].copy()

    labels = np.full(len(texts), -1)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(n_clusters):
            members = X[labels == c]
            if len(members):  # an emptied cluster keeps its previous center
                centers[c] = members.mean(axis=0)

    reps: list[int] = []
    for c in range(n_clusters):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            idx = np.array([chosen[c]])
        d = ((X[idx] - centers[c]) ** 2).sum(axis=1)
        reps.append(int(idx[int(np.argmin(d))]))
    return [texts[i] for i in sorted(set(reps))]


# -- variation generators -------------------------------------------------------


class VariationGenerator(Protocol):
    def variations(self, text: str, k: int) -> list[str]: ...


_FRAMES = ("how to {x}", "{x}", "ways to {x}", "best way to {x}", "how do i {x}", "how can i {x}")
_LEADS = ("best way to ", "how do i ", "how can i ", "ways to ", "how to ")

VERB_SYNONYMS: dict[str, tuple[str, ...]] = {
    "start": ("boot up", "launch"),
    "kill": ("exterminate", "get rid of"),
    "make": ("create", "prepare"),
    "fix": ("repair", "mend"),
    "clean": ("wash", "scrub"),
    "build": ("construct", "put together"),
    "learn": ("study", "pick up"),
    "tune": ("adjust",),
    "grow": ("cultivate", "raise"),
    "remove": ("get rid of", "take off"),
    "paint": ("repaint", "color"),
    "install": ("set up", "put in"),
    "care": ("look after",),
    "cook": ("prepare",),
    "bake": ("make",),
    "choose": ("pick", "select"),
}


def _core(text: str) -> str:
    t = normalize(text)
    for lead in _LEADS:
        if t.startswith(lead):
            return t[len(lead) :]
    return t


class TemplateGenerator:
    """Paraphrases from fixed question frames and a verb synonym table."""

    def variations(self, text: str, k: int) -> list[str]:
        core = _core(text)
        cores = [core]
        head, _, rest = core.partition(" ")
        for syn in VERB_SYNONYMS.get(head, ()):
            cores.append(f"{syn} {rest}".strip())
        seen = {normalize(text)}
        out = []
        for c in cores[1:] + cores[:1]:
            for frame in _FRAMES:
                cand = frame.format(x=c)
                if cand not in seen:
                    seen.add(cand)
                    out.append(cand)
        return out[:k]


class TableGenerator:
    """Variations read from a two-column (original, variation) TSV table."""

    def __init__(self, rows: Iterable[tuple[str, str]]):
        self.table: dict[str, list[str]] = {}
        for original, variation in rows:
            self.table.setdefault(normalize(original), []).append(variation.strip())

    @classmethod
    def from_path(cls, path: str | Path) -> "TableGenerator":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [
                (row[0], row[1])
                for row in csv.reader(fh, delimiter="\t")
                if len(row) >= 2 and not row[0].startswith("#")
            ]
        return cls(rows)

    def variations(self, text: str, k: int) -> list[str]:
        # rows may be keyed by the bare task ("start a computer") rather than
        # the full title ("how to start a computer")
        rows = self.table.get(normalize(text)) or self.table.get(_core(text), [])
        return rows[:k]


class HttpGenerator:
    """POST ``{"text": ..., "k": n}``; expects ``{"variations": [...]}``."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def variations(self, text: str, k: int) -> list[str]:
        body = json.dumps({"text": text, "k": k}).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.load(resp)
        except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
            raise GeneratorError(f"variation service {self.endpoint} failed: {exc}") from exc
        out = payload.get("variations") if isinstance(payload, dict) else None
        if not isinstance(out, list) or not all(isinstance(v, str) for v in out):
            raise GeneratorError("variation service returned a malformed response")
        return out


def generate_variations(text: str, k: int, generator: VariationGenerator | None = None) -> list[str]:
    """Up to ``k`` distinct, non-empty paraphrases of ``text``.

    Outputs equal to the input (after normalization) or to each other are
    dropped; a generator that cannot supply ``k`` yields fewer.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    generator = generator or TemplateGenerator()
    # ask for a few spares so dropped duplicates can be backfilled
    raw = generator.variations(text, k + 2)
    seen = {normalize(text)}
    out = []
    for v in raw:
        key = normalize(v)
        if key and key not in seen:
            seen.add(key)
            out.append(v.strip())
        if len(out) == k:
            break
    return out


# -- full augmentation loop -------------------------------------------------------


@dataclass
class AugmentConfig:
    sim_threshold: float = 0.5
    n_clusters: int = 8
    k_variations: int = 8
    seed: int = 0
    generator: VariationGenerator = field(default_factory=TemplateGenerator)
    include_public: bool = True

    def __post_init__(self):
        if not 0.0 <= self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must be in [0, 1]")
        if self.n_clusters < 1 or self.k_variations < 1:
            raise ValueError("n_clusters and k_variations must be >= 1")


@dataclass
class AugmentResult:
    catalog: list[TaskEntry]
    variation_map: VariationMap
    centroids: list[str]
    dropped: int


def _load_checkpoint(path: Path | None) -> dict[str, list[str]]:
    if path is None or not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _save_checkpoint(path: Path | None, done: dict[str, list[str]]) -> None:
    if path is not None:
        path.write_text(json.dumps(done, sort_keys=True, indent=1), encoding="utf-8")


def build_augmented_catalog(
    public: Sequence[str],
    private: Sequence[TaskEntry],
    config: AugmentConfig | None = None,
    embedder: Embedder | None = None,
    checkpoint: str | Path | None = None,
) -> AugmentResult:
    """Map -> cluster -> generate. Every generated variation inherits the task
    of the centroid it was generated from.

    With ``checkpoint`` set, finished centroids are recorded after each call
    to the generator; a failed run can be resumed with the same path.
    """
    config = config or AugmentConfig()
    embedder = embedder or TrigramEmbedder()
    ckpt = Path(checkpoint) if checkpoint is not None else None

    vmap = VariationMap()
    for e in private:
        for form in e.surface_forms:
            vmap.add(form, e.id, ORIGINAL)

    mapped = map_public_to_private(public, private, embedder, config.sim_threshold)
    if config.include_public:
        for text, tid in mapped.mapping.items():
            vmap.add(text, tid, PUBLIC_MAPPED)

    centroids: list[str] = []
    dropped = 0
    if mapped.mapping:
        texts = list(mapped.mapping)
        centroids = cluster_centroids(texts, embedder, config.n_clusters, config.seed)
        done = _load_checkpoint(ckpt)
        for c in centroids:
            if c not in done:
                try:
                    done[c] = generate_variations(c, config.k_variations, config.generator)
                except GeneratorError as exc:
                    _save_checkpoint(ckpt, done)
                    raise AugmentError(f"variation generation failed at {c!r}: {exc}", ckpt) from exc
                _save_checkpoint(ckpt, done)
            variations = done[c]
            dropped += config.k_variations - len(variations)
            for v in variations:
                if not vmap.add(v, mapped.mapping[c], GENERATED):
                    dropped += 1

    forms: dict[str, list[str]] = {e.id: [] for e in private}
    for text, tid in vmap.mapping.items():
        forms[tid].append(text)
    catalog = []
    for e in private:
        extra = [t for t in forms[e.id] if t not in {normalize(f) for f in e.surface_forms}]
        catalog.append(TaskEntry(e.id, e.canonical_text, e.surface_forms + tuple(extra)))
    log.info("augmented catalog: %s, %d dropped", vmap.counts(), dropped)
    return AugmentResult(catalog, vmap, centroids, dropped)


# -- narrow-context helpers --------------------------------------------------------


def expand_partial_matches(options: Sequence[str]) -> dict[str, str]:
    """Map each n-gram that occurs in exactly one option to that option.

    N-grams made only of :data:`STOP_PATTERN` words are skipped.
    """
    grams_per_option: list[set[str]] = []
    for opt in options:
        toks = tokenize(opt)
        grams = set()
        for i in range(len(toks)):
            for j in range(i + 1, len(toks) + 1):
                if not set(toks[i:j]) <= STOP_PATTERN:
                    grams.add(" ".join(toks[i:j]))
        grams_per_option.append(grams)

    seen_in: dict[str, set[int]] = {}
    for k, grams in enumerate(grams_per_option):
        for g in grams:
            # identical option texts count as one option only if they are one index
            seen_in.setdefault(g, set()).add(k)
    out: dict[str, str] = {}
    for k, opt in enumerate(options):
        for g in sorted(grams_per_option[k], key=lambda g: (len(g.split()), g)):
            if len(seen_in[g]) == 1:
                out[g] = opt
    return out


def inject_result(default_results: Sequence[str], engine_top: str, position: int = 3, limit: int = 10) -> list[str]:
    """Insert ``engine_top`` at 1-based ``position`` after dropping duplicates of it."""
    key = normalize(engine_top)
    if any(normalize(r) == key for r in default_results[:position]):
        # already ranked at least as high as it would be injected
        return list(default_results)[:limit]
    rest = [r for r in default_results if normalize(r) != key]
    at = min(position - 1, len(rest))
    return (rest[:at] + [engine_top] + rest[at:])[:limit]
