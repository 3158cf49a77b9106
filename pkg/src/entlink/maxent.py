"""Collective max-ent classifier: assignment probabilities, the regularized
conditional log-likelihood objective, quasi-Newton training, and per-component
decoding.

Objective and gradient sums run in a fixed instance order, so training is
bit-reproducible for a given data order. A trained Model is immutable and may
be read concurrently; decoding different documents in parallel is safe.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .config import PipelineConfig
from .features import FeatureExtractor, FeatureRegistry, PmiTable, default_registry, train_pmi
from .kb_store import NIL, AnchorIndex, Candidate, FormatVersionError, normalize_name
from .segmenter import (
    CandidateTuple,
    ConnectedComponent,
    MentionDocument,
    candidate_lists,
    connected_components,
    enumerate_tuples,
)

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Optimization failed (non-finite objective, incomplete supervision)."""


@dataclass
class Model:
    """Trained feature weights plus everything needed to decode."""

    weights: np.ndarray
    sigma: float
    registry: FeatureRegistry
    pmi: PmiTable
    config: PipelineConfig

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.registry),):
            raise ValueError("weight vector length must match the feature registry")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def log_score(self, feature_vector: np.ndarray) -> float:
        return float(np.dot(self.weights, feature_vector))

    def save(self, path: str) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "sigma": self.sigma,
            "registry": self.registry.to_list(),
            "weights": self.weights.tolist(),
            "pmi": self.pmi.to_payload(),
            "config": self.config.to_dict(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path: str) -> "Model":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise FormatVersionError(f"model format version {version}, expected {MODEL_FORMAT_VERSION}")
        return Model(
            weights=np.array(payload["weights"], dtype=float),
            sigma=float(payload["sigma"]),
            registry=FeatureRegistry.from_list(payload["registry"]),
            pmi=PmiTable.from_payload(payload["pmi"]),
            config=PipelineConfig.from_dict(payload["config"]),
        )


@dataclass
class TrainingInstance:
    """One connected component with its candidate assignments and gold index."""

    features: np.ndarray  # (n_tuples, n_features)
    gold_index: int
    tuples: list[CandidateTuple] | None = None
    component: ConnectedComponent | None = None
    doc_id: str | None = None
    gold_injected: bool = False

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError("instance needs a non-empty (tuples x features) matrix")
        if not (0 <= self.gold_index < self.features.shape[0]):
            raise ValueError("gold index out of range")


def softmax(scores: np.ndarray) -> np.ndarray:
    """Probabilities over assignment scores, stabilized by max subtraction."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot normalize an empty score set")
    shifted = np.exp(scores - scores.max())
    return shifted / shifted.sum()


def tuple_probability(weights: np.ndarray, features: np.ndarray, index: int) -> float:
    """Probability of the assignment at `index` among all rows of `features`."""
    return float(softmax(features @ weights)[index])


def cll_objective(
    weights: np.ndarray, instances: Sequence[TrainingInstance], sigma: float
) -> tuple[float, np.ndarray]:
    """L2-regularized conditional log-likelihood and its gradient.

    value    = sum_i log P(gold_i) - sigma * ||w||^2
    gradient = sum_i (f(gold_i) - E_P[f]) - 2 * sigma * w
    """
    weights = np.asarray(weights, dtype=float)
    value = -sigma * float(weights @ weights)
    grad = -2.0 * sigma * weights
    for inst in instances:
        scores = inst.features @ weights
        shifted = scores - scores.max()
        log_z = float(np.log(np.sum(np.exp(shifted))))
        probs = np.exp(shifted - log_z)
        value += float(shifted[inst.gold_index]) - log_z
        grad = grad + (inst.features[inst.gold_index] - probs @ inst.features)
    return value, grad


def fit_weights(
    instances: Sequence[TrainingInstance],
    sigma: float,
    dim: int,
    *,
    tol: float = 1e-6,
    max_iter: int = 500,
    history: int = 10,
) -> tuple[np.ndarray, list[float], bool]:
    """Maximize the objective with L-BFGS from a zero start.

    Returns (weights, per-iterate objective trace, converged). The objective
    is concave, so any stationary point is the global optimum; accepted steps
    never decrease the objective.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def negated(w: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = cll_objective(w, instances, sigma)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise TrainingError("non-finite objective during line search")
        return -value, -grad

    trace: list[float] = []

    def record(w: np.ndarray) -> None:
        trace.append(cll_objective(w, instances, sigma)[0])

    start = np.zeros(dim)
    record(start)
    result = minimize(
        negated,
        start,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxcor": history, "maxiter": max_iter, "gtol": tol, "ftol": 1e-14},
    )
    weights = np.asarray(result.x, dtype=float)
    _, grad = cll_objective(weights, instances, sigma)
    converged = bool(np.max(np.abs(grad), initial=0.0) <= tol)
    return weights, trace, converged


@dataclass
class BuildStats:
    components: int = 0
    skipped_unlabeled: int = 0
    injected_gold: int = 0


def build_training_instances(
    docs: Iterable[MentionDocument],
    index: AnchorIndex,
    extractor: FeatureExtractor,
    config: PipelineConfig,
) -> tuple[list[TrainingInstance], BuildStats]:
    """Turn gold-labeled documents into per-component training instances.

    Components containing any unlabeled mention are skipped (and counted).
    When retrieval misses a mention's gold entity, the gold candidate is
    injected into that mention's list so the gold assignment stays inside the
    enumerated set; injections are counted in the stats.
    """
    instances: list[TrainingInstance] = []
    stats = BuildStats()
    for doc in docs:
        view = extractor.document_view(doc)
        for component in connected_components(doc, config.gap):
            stats.components += 1
            if any(m.gold is None for m in component.mentions):
                stats.skipped_unlabeled += 1
                continue
            lists = candidate_lists(component, index, config.max_candidates, config.tuple_budget)
            injected = False
            positions = []
            for i, mention in enumerate(component.mentions):
                gold = mention.gold
                ids = [c.entity_id for c in lists[i]]
                if gold not in ids:
                    # keep NIL last so list order stays prior-ranked
                    prior = index.link_prior(mention.surface, gold)
                    lists[i] = lists[i][:-1] + [Candidate(gold, prior), lists[i][-1]]
                    ids = [c.entity_id for c in lists[i]]
                    injected = True
                positions.append(ids.index(gold))
            if injected:
                stats.injected_gold += 1
            sizes = [len(lst) for lst in lists]
            gold_index = 0
            for pos, size in zip(positions, sizes):
                gold_index = gold_index * size + pos
            tuples = [CandidateTuple(assignments=combo) for combo in itertools.product(*lists)]
            matrix = np.stack([extractor.tuple_features(t, component, view) for t in tuples])
            instances.append(
                TrainingInstance(
                    features=matrix,
                    gold_index=gold_index,
                    tuples=tuples,
                    component=component,
                    doc_id=doc.doc_id,
                    gold_injected=injected,
                )
            )
    return instances, stats


@dataclass
class TrainResult:
    model: Model
    objective_trace: list[float]
    converged: bool
    stats: BuildStats


def train(
    docs: Iterable[MentionDocument],
    index: AnchorIndex,
    config: PipelineConfig | None = None,
    *,
    stopwords: frozenset[str] | set[str] = frozenset(),
    blacklist_threshold: float = 0.05,
    tol: float = 1e-6,
    max_iter: int = 500,
    history: int = 10,
) -> TrainResult:
    """End-to-end training: PMI table from gold sequences, then weights.

    Deterministic for a fixed document order.
    """
    config = config if config is not None else PipelineConfig()
    config.validate()
    docs = list(docs)
    gold_sequences = []
    for doc in docs:
        for component in connected_components(doc, config.gap):
            if all(m.gold is not None for m in component.mentions):
                gold_sequences.append([m.gold for m in component.mentions])
    pmi = train_pmi(gold_sequences, index, blacklist_threshold)
    registry = default_registry()
    extractor = FeatureExtractor(
        index,
        pmi,
        registry,
        stopwords=stopwords,
        window=config.context_window,
        top_n=config.top_n,
    )
    instances, stats = build_training_instances(docs, index, extractor, config)
    weights, trace, converged = fit_weights(
        instances, config.sigma, len(registry), tol=tol, max_iter=max_iter, history=history
    )
    model = Model(weights=weights, sigma=config.sigma, registry=registry, pmi=pmi, config=config)
    return TrainResult(model=model, objective_trace=trace, converged=converged, stats=stats)


class Prediction(NamedTuple):
    doc_id: str
    mention_id: str
    entity_id: str  # KB id or NIL
    score: float
    surface: str
    nil_cluster: str | None = None


def best_tuple_index(scores: np.ndarray, id_sequences: Sequence[tuple[str, ...]]) -> int:
    """Argmax over scores; exact ties go to the smallest id sequence."""
    scores = np.asarray(scores, dtype=float)
    top = scores.max()
    tied = np.flatnonzero(scores == top)
    best = int(tied[0])
    for i in tied[1:]:
        if id_sequences[int(i)] < id_sequences[best]:
            best = int(i)
    return best


def decode(
    model: Model,
    doc: MentionDocument,
    index: AnchorIndex,
    *,
    stopwords: frozenset[str] | set[str] = frozenset(),
    extractor: FeatureExtractor | None = None,
) -> list[Prediction]:
    """Label every mention of a document with its best candidate (or NIL).

    Each connected component is decoded independently: the highest-scoring
    joint assignment over the enumerated candidates wins, with deterministic
    tie-breaking. The reported score is the assignment's probability within
    its component.
    """
    if extractor is None:
        extractor = FeatureExtractor(
            index,
            model.pmi,
            model.registry,
            stopwords=stopwords,
            window=model.config.context_window,
            top_n=model.config.top_n,
        )
    if extractor.registry != model.registry:
        raise ValueError("extractor registry does not match the model registry")

    view = extractor.document_view(doc)
    by_mention: dict[str, Prediction] = {}
    for component in connected_components(doc, model.config.gap):
        tuples = enumerate_tuples(component, index, model.config.max_candidates, model.config.tuple_budget)
        matrix = np.stack([extractor.tuple_features(t, component, view) for t in tuples])
        scores = matrix @ model.weights
        probs = softmax(scores)
        best = best_tuple_index(scores, [t.ids for t in tuples])
        for mention, candidate in zip(component.mentions, tuples[best].assignments):
            by_mention[mention.id] = Prediction(
                doc_id=doc.doc_id,
                mention_id=mention.id,
                entity_id=candidate.entity_id,
                score=float(probs[best]),
                surface=mention.surface,
            )
    return [by_mention[m.id] for m in doc.mentions]


def nil_cluster(predictions: Iterable[Prediction]) -> list[Prediction]:
    """Assign cluster ids to NIL predictions by normalized surface form.

    Cluster ids are ordinals over the sorted set of normalized surfaces, so
    they are stable across runs on the same predictions.
    """
    predictions = list(predictions)
    surfaces = sorted(
        {normalize_name(p.surface) for p in predictions if p.entity_id == NIL}
    )
    cluster_of = {surface: f"NIL{i:04d}" for i, surface in enumerate(surfaces)}
    out = []
    for p in predictions:
        if p.entity_id == NIL:
            out.append(p._replace(nil_cluster=cluster_of[normalize_name(p.surface)]))
        else:
            out.append(p)
    return out


def write_predictions(predictions: Iterable[Prediction], path: str) -> None:
    """Write predictions as line-delimited JSON records."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            record = {
                "doc_id": p.doc_id,
                "mention_id": p.mention_id,
                "prediction": p.entity_id,
                "score": p.score,
            }
            if p.nil_cluster is not None:
                record["nil_cluster"] = p.nil_cluster
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_predictions(path: str) -> list[dict]:
    """Read prediction records written by `write_predictions`."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from None
    return records
