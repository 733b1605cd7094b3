"""Name normalization, edge verbalization, text embedding, entity linking.

Raw ingredient names from different sources rarely agree, so linking runs a
three-stage cascade: exact match, normalized-name match, then cosine
similarity of deterministic feature-hashed character-trigram embeddings.
Names that fail every stage become new canonical identifiers, which keeps
the link table a total function over the input names.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .triples import Literal, format_number

#: embedding dimensionality
EMBED_DIM = 128
#: fixed seed for the trigram feature hash
HASH_SEED = 0x5EED_F00D
#: minimum cosine score for an embedding-stage link
LINK_THRESHOLD = 0.55
#: two embedding candidates closer than this are an ambiguity, not a pick
TIE_TOLERANCE = 1e-9

#: tokens ending in these (with a hyphen) are dropped wholesale
_SUFFIX_DROP = ("-flavored", "-flavoured", "-style", "-based")

_PAREN_RE = re.compile(r"\([^()]*\)")


class AmbiguousLink(Exception):
    def __init__(self, name: str, candidates: List[str], score: float):
        super().__init__(
            f"{name!r} ties between {sorted(candidates)} at cosine {score:.6f}"
        )
        self.name = name
        self.candidates = candidates
        self.score = score


def _load_stopwords() -> frozenset:
    text = resources.files("aquasub.data").joinpath("stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


_STOPWORDS = _load_stopwords()


def normalize_name(raw: str, stopwords: Optional[frozenset] = None) -> str:
    """Reduce a raw ingredient name to its canonical descriptor form.

    Lowercase, drop parenthesized segments, drop ``*-flavored``/``*-style``/
    ``*-based`` tokens and stoplisted modifier tokens, collapse whitespace.
    Falls back to the lowercased input if everything gets stripped, which
    keeps the function idempotent.
    """
    if stopwords is None:
        stopwords = _STOPWORDS
    lowered = raw.lower()
    text = lowered
    while True:
        reduced = _PAREN_RE.sub(" ", text)
        if reduced == text:
            break
        text = reduced
    tokens = []
    for token in text.split():
        if token.endswith(_SUFFIX_DROP):
            continue
        token = token.strip(".,;:!?'\"()[]{}")
        if not token or token in stopwords:
            continue
        tokens.append(token)
    return " ".join(tokens) if tokens else lowered


def _hash64(trigram: str) -> int:
    digest = hashlib.blake2b(
        trigram.encode("utf-8"), digest_size=8, key=HASH_SEED.to_bytes(8, "big")
    ).digest()
    return int.from_bytes(digest, "big")


def embed_text(text: str) -> np.ndarray:
    """Deterministic unit-norm trigram-hash embedding; empty text maps to 0."""
    if not text:
        return np.zeros(EMBED_DIM)
    padded = f" {text.lower()} "
    counts = Counter(padded[i : i + 3] for i in range(len(padded) - 2))
    vec = np.zeros(EMBED_DIM)
    for trigram, count in counts.items():
        h = _hash64(trigram)
        sign = 1.0 if (h >> 7) & 1 else -1.0
        vec[h % EMBED_DIM] += sign * count
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# --- verbalization --------------------------------------------------------


def _load_templates() -> Dict[str, str]:
    text = resources.files("aquasub.data").joinpath("templates.tsv").read_text("utf-8")
    templates = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        relation, template = line.split("\t", 1)
        templates[relation] = template
    return templates


_TEMPLATES = _load_templates()


def verbalize_edge(edge, names: Optional[Mapping[str, str]] = None) -> str:
    """Render a graph edge as an English sentence via the template table.

    ``names`` maps node ids to display names; unnamed nodes fall back to
    their raw id.
    """
    names = names or {}
    template = _TEMPLATES[edge.relation.value]
    subject = names.get(edge.subject, edge.subject)
    obj = edge.object
    if isinstance(obj, Literal):
        value = format_number(obj.value) if obj.is_numeric else str(obj.value)
        object_text = value
    else:
        value = ""
        object_text = names.get(obj, obj)
    return template.format(subject=subject, object=object_text, value=value)


# --- entity linking ---------------------------------------------------------

EXACT = "exact"
NORMALIZED = "normalized"
EMBEDDING = "embedding"
NEW = "new"


@dataclass(frozen=True)
class LinkEntry:
    raw_name: str
    canonical_id: str
    method: str
    score: Optional[float] = None


@dataclass
class LinkTable:
    entries: Dict[str, LinkEntry]

    def resolve(self, raw_name: str) -> Optional[str]:
        entry = self.entries.get(raw_name)
        return entry.canonical_id if entry else None

    def __len__(self) -> int:
        return len(self.entries)


def _slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return slug or "unnamed"


def link_entities(
    sources: Union[Mapping[str, Iterable[str]], Iterable[str]],
    profiles: Mapping[str, str],
    threshold: float = LINK_THRESHOLD,
) -> LinkTable:
    """Resolve every raw source name onto a canonical id.

    ``sources`` is either a mapping of source name to its raw-name set or a
    plain iterable of raw names. ``profiles`` maps existing canonical ids to
    display names. The cascade stops at the first stage that matches; ties
    in the embedding stage raise :class:`AmbiguousLink` rather than guess.
    """
    if isinstance(sources, Mapping):
        raw_names = sorted({n for names in sources.values() for n in names})
    else:
        raw_names = sorted(set(sources))

    display = dict(profiles)
    # Normalized-name index; collisions resolve to the smallest id.
    norm_index: Dict[str, str] = {}
    for cid in sorted(display):
        key = normalize_name(display[cid])
        norm_index.setdefault(key, cid)
        norm_index.setdefault(normalize_name(cid), cid)
    embeddings = {cid: embed_text(normalize_name(display[cid])) for cid in sorted(display)}

    entries: Dict[str, LinkEntry] = {}
    taken_ids = set(display)
    for raw in raw_names:
        exact_ids = [raw] if raw in display else _values_to_ids(display, raw)
        if exact_ids:
            entries[raw] = LinkEntry(raw, exact_ids[0], EXACT)
            continue
        normalized = normalize_name(raw)
        if normalized in norm_index:
            entries[raw] = LinkEntry(raw, norm_index[normalized], NORMALIZED)
            continue
        match = _best_embedding_match(raw, normalized, embeddings, threshold)
        if match is not None:
            cid, score = match
            entries[raw] = LinkEntry(raw, cid, EMBEDDING, score)
            continue
        new_id = _fresh_id(_slugify(normalized), taken_ids)
        taken_ids.add(new_id)
        display[new_id] = raw
        norm_index.setdefault(normalized, new_id)
        embeddings[new_id] = embed_text(normalized)
        entries[raw] = LinkEntry(raw, new_id, NEW)
    return LinkTable(entries)


def _values_to_ids(display: Mapping[str, str], name: str) -> List[str]:
    return sorted(cid for cid, text in display.items() if text == name)


def _best_embedding_match(
    raw: str,
    normalized: str,
    embeddings: Mapping[str, np.ndarray],
    threshold: float,
) -> Optional[Tuple[str, float]]:
    query = embed_text(normalized)
    scored = sorted(
        ((cosine(query, vec), cid) for cid, vec in embeddings.items()),
        key=lambda pair: (-pair[0], pair[1]),
    )
    if not scored or scored[0][0] < threshold:
        return None
    best_score, best_id = scored[0]
    ties = [cid for score, cid in scored if abs(score - best_score) <= TIE_TOLERANCE]
    if len(ties) > 1:
        raise AmbiguousLink(raw, ties, best_score)
    return best_id, best_score


def _fresh_id(base: str, taken: set) -> str:
    if base not in taken:
        return base
    n = 2
    while f"{base}_{n}" in taken:
        n += 1
    return f"{base}_{n}"


# --- link-table persistence ---------------------------------------------


def write_link_table(table: LinkTable) -> str:
    """CSV export: ``raw_name,canonical_id,method,score`` (score may be empty)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["raw_name", "canonical_id", "method", "score"])
    for raw in sorted(table.entries):
        entry = table.entries[raw]
        score = "" if entry.score is None else f"{entry.score:.9f}"
        writer.writerow([entry.raw_name, entry.canonical_id, entry.method, score])
    return out.getvalue()


def read_link_table(text: str) -> LinkTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["raw_name", "canonical_id", "method", "score"]:
        raise ValueError(f"bad link-table header: {header!r}")
    entries = {}
    for row in reader:
        if not row:
            continue
        raw, cid, method, score = row
        entries[raw] = LinkEntry(raw, cid, method, float(score) if score else None)
    return LinkTable(entries)
