"""Language-independent feature functions over joint candidate assignments.

Every feature measures overlap between document text and KB-entry text or
structure; none consults a hard-coded word list (the optional stop-word set is
the only lexical resource). Real-valued features are summed over the mentions
(or consecutive candidate pairs) of an assignment; boolean features combine
with AND.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kb_store import NIL, AnchorIndex, Candidate, normalize_name
from .segmenter import CandidateTuple, ConnectedComponent, Mention, MentionDocument
from .text_vsm import TermVector, context_window, cosine, term_freq, tokenize

COSINE_FEATURES = (
    "cos_text_text",   # page text vs mention text
    "cos_text_ctx",    # page text vs mention context
    "cos_ctx_text",    # page context vs mention text
    "cos_ctx_ctx",     # page context vs mention context
    "cos_top_text",    # page top terms vs mention text
    "cos_top_ctx",     # page top terms vs mention context
)

LINK_RELATIONS = ("category", "inlink", "outlink", "redirect")

FREQUENCY_FEATURES = tuple(
    f"{relation}_freq_{side}" for relation in LINK_RELATIONS for side in ("text", "ctx")
)

TITLE_FEATURES = (
    "exact_match_redirect",  # surface is a redirect of the candidate
    "match_all_title",       # surface equals the candidate title
    "match_acronym",         # all-caps surface matches name initials
    "link_prior",
    "nil_frequency",
)

PAIR_FEATURES = (
    "outlink_overlap",
    "inlink_overlap",
    "category_pmi",
    "categorical_relation_freq",
    "title_cooccurrence",
)

# AND-aggregated across the mentions of an assignment; everything else sums.
BOOLEAN_FEATURES = frozenset({"exact_match_redirect", "match_all_title", "match_acronym"})


class FeatureRegistry:
    """Stable ordered feature-name list shared by training and decoding."""

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        self.names = names
        self._index = {name: i for i, name in enumerate(names)}
        self.boolean_indices = np.array(
            [i for i, name in enumerate(names) if name in BOOLEAN_FEATURES], dtype=int
        )

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureRegistry) and self.names == other.names

    def index(self, name: str) -> int:
        return self._index[name]

    def to_list(self) -> list[str]:
        return list(self.names)

    @staticmethod
    def from_list(names: Sequence[str]) -> "FeatureRegistry":
        return FeatureRegistry(names)


def default_registry() -> FeatureRegistry:
    return FeatureRegistry(COSINE_FEATURES + FREQUENCY_FEATURES + TITLE_FEATURES + PAIR_FEATURES)


@dataclass
class PmiTable:
    """Pointwise mutual information over category pairs of consecutive gold
    entities, with high-frequency categories blacklisted."""

    pair_scores: dict[tuple[str, str], float] = field(default_factory=dict)
    category_counts: dict[str, int] = field(default_factory=dict)
    blacklist: frozenset[str] = frozenset()

    def score(self, cat_a: str, cat_b: str) -> float:
        key = (cat_a, cat_b) if cat_a <= cat_b else (cat_b, cat_a)
        return self.pair_scores.get(key, 0.0)

    def to_payload(self) -> dict:
        return {
            "pairs": [[a, b, score] for (a, b), score in sorted(self.pair_scores.items())],
            "category_counts": dict(sorted(self.category_counts.items())),
            "blacklist": sorted(self.blacklist),
        }

    @staticmethod
    def from_payload(payload: dict) -> "PmiTable":
        return PmiTable(
            pair_scores={(a, b): float(s) for a, b, s in payload.get("pairs", [])},
            category_counts={c: int(n) for c, n in payload.get("category_counts", {}).items()},
            blacklist=frozenset(payload.get("blacklist", [])),
        )


def train_pmi(
    gold_components: Iterable[Sequence[str]],
    index: AnchorIndex,
    blacklist_threshold: float = 0.05,
) -> PmiTable:
    """Build the PMI table from gold entity-id sequences, one per component.

    For categories a, b the score is the number of consecutive gold pairs
    whose category sets contain a on one side and b on the other, divided by
    the product of the categories' occurrence counts over all gold entities.
    Categories attached to more than `blacklist_threshold` of the gold entity
    occurrences are removed before any counting.
    """
    sequences = [list(seq) for seq in gold_components]
    occurrences: list[frozenset[str]] = []
    for seq in sequences:
        for eid in seq:
            entry = index.entries.get(eid)
            if eid != NIL and entry is not None:
                occurrences.append(entry.categories)

    total = len(occurrences)
    raw_counts: Counter[str] = Counter()
    for cats in occurrences:
        raw_counts.update(cats)
    blacklist = frozenset(c for c, n in raw_counts.items() if n > blacklist_threshold * total)
    counts = {c: n for c, n in raw_counts.items() if c not in blacklist}

    def kept_categories(eid: str) -> frozenset[str]:
        entry = index.entries.get(eid)
        if eid == NIL or entry is None:
            return frozenset()
        return entry.categories - blacklist

    numerators: Counter[tuple[str, str]] = Counter()
    for seq in sequences:
        for left, right in zip(seq, seq[1:]):
            cats_left = kept_categories(left)
            cats_right = kept_categories(right)
            for a in cats_left:
                for b in cats_right:
                    key = (a, b) if a <= b else (b, a)
                    numerators[key] += 1

    pair_scores = {}
    for (a, b), numer in numerators.items():
        denom = counts.get(a, 0) * counts.get(b, 0)
        if denom > 0:
            pair_scores[(a, b)] = numer / denom
    return PmiTable(pair_scores=pair_scores, category_counts=counts, blacklist=blacklist)


def jaccard(a: Iterable, b: Iterable) -> float:
    sa, sb = set(a), set(b)
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def count_contiguous(needle: tuple[str, ...], haystack: tuple[str, ...]) -> int:
    """Occurrences of `needle` as a contiguous subsequence of `haystack`."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return 0
    return sum(1 for i in range(len(haystack) - n + 1) if haystack[i:i + n] == needle)


def _acronym(tokens: Sequence[str]) -> str | None:
    if len(tokens) < 2:
        return None
    return "".join(t[0] for t in tokens if t)


class _EntityData:
    """Per-entity derived data shared across feature computations."""

    __slots__ = (
        "norm_title", "norm_redirects", "acronyms", "title_tokens",
        "category_token_sets", "name_sequences",
    )

    def __init__(self, extractor: "FeatureExtractor", eid: str):
        index = extractor.index
        stop = extractor.stopwords
        entry = index.entries[eid]
        self.norm_title = normalize_name(entry.title)
        self.norm_redirects = frozenset(normalize_name(r) for r in entry.redirects)
        acronyms = set()
        for name in [entry.title, *entry.redirects]:
            initials = _acronym([t.text for t in tokenize(name)])
            if initials:
                acronyms.add(initials)
        self.acronyms = frozenset(acronyms)
        self.title_tokens = frozenset(t.text for t in tokenize(entry.title) if t.text not in stop)
        self.category_token_sets = {
            c: frozenset(t.text for t in tokenize(c) if t.text not in stop)
            for c in entry.categories
        }

        def sequences(names: Iterable[str]) -> tuple[tuple[str, ...], ...]:
            seqs = []
            for name in names:
                seq = tuple(t.text for t in tokenize(name) if t.text not in stop)
                if seq:
                    seqs.append(seq)
            return tuple(seqs)

        self.name_sequences = {
            "category": sequences(sorted(entry.categories)),
            "redirect": sequences(sorted(entry.redirects)),
            "inlink": sequences(sorted(index.titles(index.inlinks.get(eid, frozenset())))),
            "outlink": sequences(sorted(index.titles(index.outlink_counts.get(eid, {})))),
        }


class DocumentView:
    """Tokenization and per-mention vectors of one document, computed once."""

    def __init__(self, extractor: "FeatureExtractor", doc: MentionDocument):
        self.doc = doc
        self.tokens = tokenize(doc.text)
        self._extractor = extractor
        self._text_vecs: dict[str, TermVector] = {}
        self._ctx_vecs: dict[str, TermVector] = {}
        self._text_seqs: dict[str, tuple[str, ...]] = {}
        self._ctx_seqs: dict[str, tuple[str, ...]] = {}
        self._partials: dict[tuple[str, str], np.ndarray] = {}

    def _mention_tokens(self, mention: Mention) -> None:
        stop = self._extractor.stopwords
        text_seq = tuple(
            t.text for t in tokenize(mention.surface) if t.text not in stop
        )
        ctx_tokens = context_window(self.tokens, mention.start, self._extractor.window)
        ctx_seq = tuple(t.text for t in ctx_tokens if t.text not in stop)
        self._text_seqs[mention.id] = text_seq
        self._ctx_seqs[mention.id] = ctx_seq
        self._text_vecs[mention.id] = term_freq(text_seq)
        self._ctx_vecs[mention.id] = term_freq(ctx_seq)

    def mention_text_vector(self, mention: Mention) -> TermVector:
        if mention.id not in self._text_vecs:
            self._mention_tokens(mention)
        return self._text_vecs[mention.id]

    def mention_context_vector(self, mention: Mention) -> TermVector:
        if mention.id not in self._ctx_vecs:
            self._mention_tokens(mention)
        return self._ctx_vecs[mention.id]

    def mention_text_sequence(self, mention: Mention) -> tuple[str, ...]:
        if mention.id not in self._text_seqs:
            self._mention_tokens(mention)
        return self._text_seqs[mention.id]

    def mention_context_sequence(self, mention: Mention) -> tuple[str, ...]:
        if mention.id not in self._ctx_seqs:
            self._mention_tokens(mention)
        return self._ctx_seqs[mention.id]


class FeatureExtractor:
    """Computes feature vectors for candidate assignments against one index.

    All caches are write-once per key with idempotent values, so a built
    extractor may be shared by concurrent readers.
    """

    def __init__(
        self,
        index: AnchorIndex,
        pmi: PmiTable | None = None,
        registry: FeatureRegistry | None = None,
        *,
        stopwords: frozenset[str] | set[str] = frozenset(),
        window: int = 100,
        top_n: int = 200,
    ):
        self.index = index
        self.pmi = pmi if pmi is not None else PmiTable()
        self.registry = registry if registry is not None else default_registry()
        self.stopwords = frozenset(stopwords)
        self.window = window
        self.top_n = top_n
        self._idx = {name: self.registry.index(name) for name in self.registry.names}
        self._entity_text: dict[str, TermVector] = {}
        self._entity_top: dict[str, TermVector] = {}
        self._entity_tokens: dict[str, list] = {}
        self._entity_ctx: dict[tuple[str, str], TermVector] = {}
        self._entity_data: dict[str, _EntityData] = {}
        self._pair_vectors: dict[tuple[str, str], np.ndarray] = {}

    def document_view(self, doc: MentionDocument) -> DocumentView:
        return DocumentView(self, doc)

    # -- entity-side caches ---------------------------------------------------

    def _page_tokens(self, eid: str):
        if eid not in self._entity_tokens:
            self._entity_tokens[eid] = tokenize(self.index.entries[eid].text)
        return self._entity_tokens[eid]

    def _entity_text_vector(self, eid: str) -> TermVector:
        if eid not in self._entity_text:
            tokens = self._page_tokens(eid)
            self._entity_text[eid] = term_freq((t.text for t in tokens), self.stopwords)
        return self._entity_text[eid]

    def _entity_top_vector(self, eid: str) -> TermVector:
        if eid not in self._entity_top:
            full = self._entity_text_vector(eid)
            if len(full) <= self.top_n:
                self._entity_top[eid] = full
            else:
                ranked = sorted(full.items(), key=lambda kv: (-kv[1], kv[0]))
                self._entity_top[eid] = dict(ranked[: self.top_n])
        return self._entity_top[eid]

    def _entity_context_vector(self, eid: str, surface: str) -> TermVector:
        """Window around the first occurrence of the surface in the page text,
        falling back to the leading window of the page."""
        key = (eid, normalize_name(surface))
        if key in self._entity_ctx:
            return self._entity_ctx[key]
        tokens = self._page_tokens(eid)
        needle = tuple(t.text for t in tokenize(surface))
        anchor = None
        if needle:
            texts = [t.text for t in tokens]
            for i in range(len(texts) - len(needle) + 1):
                if tuple(texts[i:i + len(needle)]) == needle:
                    anchor = tokens[i].start
                    break
        if anchor is None:
            vec = term_freq((t.text for t in tokens[: self.window]), self.stopwords)
        else:
            window_tokens = context_window(tokens, anchor, self.window)
            vec = term_freq((t.text for t in window_tokens), self.stopwords)
        self._entity_ctx[key] = vec
        return vec

    def _data(self, eid: str) -> _EntityData:
        if eid not in self._entity_data:
            self._entity_data[eid] = _EntityData(self, eid)
        return self._entity_data[eid]

    # -- feature functions ------------------------------------------------------

    def mention_entity_features(
        self, mention: Mention, candidate: Candidate, view: DocumentView
    ) -> np.ndarray:
        """Partial feature vector for one mention/candidate pair.

        NIL candidates set only the NIL indicator; candidates without a KB
        entry keep every KB-derived feature at zero.
        """
        return self._mention_entity(mention, candidate, view).copy()

    def _mention_entity(
        self, mention: Mention, candidate: Candidate, view: DocumentView
    ) -> np.ndarray:
        cache_key = (mention.id, candidate.entity_id)
        cached = view._partials.get(cache_key)
        if cached is not None:
            return cached

        idx = self._idx
        vec = np.zeros(len(self.registry))
        eid = candidate.entity_id
        if eid == NIL:
            vec[idx["nil_frequency"]] = 1.0
            view._partials[cache_key] = vec
            return vec

        vec[idx["link_prior"]] = candidate.link_prior
        if eid not in self.index.entries:
            view._partials[cache_key] = vec
            return vec

        text_m = view.mention_text_vector(mention)
        ctx_m = view.mention_context_vector(mention)
        text_e = self._entity_text_vector(eid)
        top_e = self._entity_top_vector(eid)
        ctx_e = self._entity_context_vector(eid, mention.surface)
        vec[idx["cos_text_text"]] = cosine(text_e, text_m)
        vec[idx["cos_text_ctx"]] = cosine(text_e, ctx_m)
        vec[idx["cos_ctx_text"]] = cosine(ctx_e, text_m)
        vec[idx["cos_ctx_ctx"]] = cosine(ctx_e, ctx_m)
        vec[idx["cos_top_text"]] = cosine(top_e, text_m)
        vec[idx["cos_top_ctx"]] = cosine(top_e, ctx_m)

        data = self._data(eid)
        sides = {
            "text": view.mention_text_sequence(mention),
            "ctx": view.mention_context_sequence(mention),
        }
        for relation in LINK_RELATIONS:
            sequences = data.name_sequences[relation]
            for side, tokens in sides.items():
                total = sum(count_contiguous(seq, tokens) for seq in sequences)
                vec[idx[f"{relation}_freq_{side}"]] = float(total)

        surface_key = normalize_name(mention.surface)
        vec[idx["match_all_title"]] = 1.0 if surface_key == data.norm_title else 0.0
        vec[idx["exact_match_redirect"]] = 1.0 if surface_key in data.norm_redirects else 0.0
        is_acronym = (
            mention.surface.isupper()
            and len(surface_key) >= 2
            and surface_key in data.acronyms
        )
        vec[idx["match_acronym"]] = 1.0 if is_acronym else 0.0

        view._partials[cache_key] = vec
        return vec

    def entity_entity_features(self, first: str, second: str) -> np.ndarray:
        """Partial feature vector for a consecutive candidate pair."""
        return self._pair(first, second).copy()

    def _pair(self, first: str, second: str) -> np.ndarray:
        key = (first, second)
        cached = self._pair_vectors.get(key)
        if cached is not None:
            return cached

        idx = self._idx
        vec = np.zeros(len(self.registry))
        entries = self.index.entries
        if first == NIL or second == NIL or first not in entries or second not in entries:
            self._pair_vectors[key] = vec
            return vec

        out1 = self.index.outlink_counts.get(first, {})
        out2 = self.index.outlink_counts.get(second, {})
        vec[idx["outlink_overlap"]] = jaccard(out1, out2)
        vec[idx["inlink_overlap"]] = jaccard(
            self.index.inlinks.get(first, frozenset()),
            self.index.inlinks.get(second, frozenset()),
        )

        data1, data2 = self._data(first), self._data(second)
        cats1, cats2 = entries[first].categories, entries[second].categories
        vec[idx["category_pmi"]] = float(
            sum(self.pmi.score(a, b) for a in cats1 for b in cats2)
        )

        relations = 0
        for token_sets, title_tokens in (
            (data1.category_token_sets, data2.title_tokens),
            (data2.category_token_sets, data1.title_tokens),
        ):
            for cat_tokens in token_sets.values():
                if jaccard(cat_tokens, title_tokens) >= 0.5:
                    relations += 1
        vec[idx["categorical_relation_freq"]] = float(relations)

        vec[idx["title_cooccurrence"]] = float(out1.get(second, 0) + out2.get(first, 0))
        self._pair_vectors[key] = vec
        return vec

    def tuple_features(
        self, t: CandidateTuple, component: ConnectedComponent, view: DocumentView
    ) -> np.ndarray:
        """Aggregate feature vector for one joint assignment.

        Real features sum over the mentions and consecutive pairs; boolean
        features are 1.0 only when the predicate holds at every mention.
        """
        mentions = component.mentions
        if len(t.assignments) != len(mentions):
            raise ValueError(
                f"assignment arity {len(t.assignments)} != component size {len(mentions)}"
            )
        parts = [
            self._mention_entity(m, c, view) for m, c in zip(mentions, t.assignments)
        ]
        out = np.zeros(len(self.registry))
        for part in parts:
            out += part
        bool_idx = self.registry.boolean_indices
        if parts and bool_idx.size:
            out[bool_idx] = np.stack([p[bool_idx] for p in parts]).min(axis=0)
        for left, right in zip(t.assignments, t.assignments[1:]):
            out += self._pair(left.entity_id, right.entity_id)
        return out
