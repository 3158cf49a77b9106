"""Shared fixture generators and oracles for randomized tests."""

import random

import numpy as np

from entlink.config import PipelineConfig
from entlink.features import PmiTable, default_registry
from entlink.fixtures import doc_from_spans
from entlink.kb_store import KbEntry, build_index
from entlink.maxent import Model
from entlink.text_vsm import tokenize


def closure_oracle(doc, gap):
    """O(n^2) pairwise distances followed by repeated-pass transitive closure.

    Independent of the union-find implementation under test.
    """
    tokens = tokenize(doc.text)
    mentions = doc.mentions
    n = len(mentions)
    linked = [[False] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            lo, hi = (a, b) if mentions[a].start <= mentions[b].start else (b, a)
            between = sum(
                1 for t in tokens if t.start >= mentions[lo].end and t.end <= mentions[hi].start
            )
            linked[a][b] = between <= gap
    changed = True
    while changed:
        changed = False
        for a in range(n):
            for b in range(n):
                if linked[a][b]:
                    for c in range(n):
                        if linked[b][c] and not linked[a][c]:
                            linked[a][c] = True
                            changed = True
    return {frozenset(mentions[b].id for b in range(n) if linked[a][b]) for a in range(n)}

_VOCAB = [f"v{i}" for i in range(30)]
_CATEGORIES = [f"Cat {i}" for i in range(6)]


def random_linking_kb(rng: random.Random, n_entities: int = 6, n_surfaces: int = 3):
    """Small random KB where each surface has at most 4 KB candidates."""
    entity_ids = [f"E{i}" for i in range(n_entities)]
    entries = []
    for i, eid in enumerate(entity_ids):
        words = rng.choices(_VOCAB, k=rng.randint(5, 15))
        outlinks = []
        for target in rng.sample(entity_ids, k=rng.randint(0, min(3, n_entities))):
            if target != eid:
                outlinks.append((f"link to {target}", target))
        redirects = set()
        if rng.random() < 0.4:
            redirects.add(f"alias {eid}")
        entries.append(
            KbEntry(
                id=eid,
                title=f"Title {eid}",
                text=" ".join(words),
                categories=frozenset(rng.sample(_CATEGORIES, k=rng.randint(0, 2))),
                outlinks=tuple(outlinks),
                redirects=frozenset(redirects),
            )
        )
    hub_links = []
    for s in range(n_surfaces):
        referents = rng.sample(entity_ids, k=rng.randint(1, 4))
        for target in referents:
            hub_links.extend([(f"s{s}", target)] * rng.randint(1, 3))
    entries.append(
        KbEntry(id="HUB", title="Hub page", text="surface listing", outlinks=tuple(hub_links))
    )
    return build_index(entries)


def random_linking_doc(rng: random.Random, doc_id: str, n_surfaces: int = 3):
    """Document whose mentions sit close together (one connected component)."""
    n_mentions = rng.randint(1, 3)
    picked = [f"s{rng.randrange(n_surfaces)}" for _ in range(n_mentions)]
    words = []
    spans = []
    for i, surface in enumerate(picked):
        words.append(surface)
        spans.append((f"m{i}", surface, None))
        words.append(rng.choice(_VOCAB))
    text = " ".join(words)
    doc = doc_from_spans(doc_id, text, spans)
    return doc


def random_model(rng: random.Random, scale: float = 1.0) -> Model:
    registry = default_registry()
    weights = np.array([rng.uniform(-scale, scale) for _ in range(len(registry))])
    return Model(
        weights=weights,
        sigma=0.5,
        registry=registry,
        pmi=PmiTable(),
        config=PipelineConfig(max_candidates=5),
    )
