"""Evaluation protocols: base rates, top-k retrieval, splits, tracking replay.

Every run here is a pure function of (corpus, weights, seeds); reports are
emitted as JSON or CSV rows so external tooling can plot them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import timedelta
from enum import Enum

import numpy as np

from .embedder import EmbedderWeights, InsufficientData, embed_batch, knn_topk
from .forest import EmptyDataset, ForestModel
from .linker import LinkerConfig, Matcher
from .tracemodel import FingerprintRecord, preprocess

TOPK_LEVELS = (1, 5, 10)
DEFAULT_MIN_COLLECTIONS = 28
DEFAULT_TRACKING_PERIODS = (2, 3, 4, 5, 6, 7)


class LengthMismatch(ValueError):
    """Prediction and truth sequences must pair up one to one."""


class InsufficientCollections(ValueError):
    """k-shot memorization needs more than k collections per device."""


class SpanTooShort(ValueError):
    """Tracking replay needs a corpus much longer than the longest period."""


# --- base rates ---

def base_rate_classical(labels, n: int) -> float:
    """Summed share of the n most frequent labels (frequency guesser ceiling).

    Ties between labels of equal count break alphabetically, so the value
    is a pure function of the multiset.
    """
    counts = Counter(labels)
    if not counts:
        raise EmptyDataset("no labels to count")
    if n < 1:
        raise ValueError("n must be >= 1")
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return float(sum(count for _, count in ranked[:n]) / total)


def base_rate_kshot(device_count: int, n: int) -> float:
    """Chance of a uniform guesser naming the device within n tries."""
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    if not 1 <= n <= device_count:
        raise ValueError("n must lie in [1, device_count]")
    return n / device_count


def topk_accuracy(predictions, truths, k: int) -> float:
    """Fraction of queries whose truth appears in the first k predictions."""
    if len(predictions) != len(truths):
        raise LengthMismatch(
            f"{len(predictions)} prediction lists for {len(truths)} truths")
    if not truths:
        raise EmptyDataset("no queries")
    hits = sum(1 for predicted, truth in zip(predictions, truths)
               if truth in predicted[:k])
    return hits / len(truths)


# --- split configuration and reports ---

class SplitKind(Enum):
    RANDOM_SPLIT = "random-split"
    KSHOT = "kshot"


@dataclass(frozen=True)
class SplitSpec:
    kind: SplitKind = SplitKind.RANDOM_SPLIT
    train_fraction: float = 0.8
    k: int = 1
    min_collections: int = DEFAULT_MIN_COLLECTIONS
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.min_collections < 0:
            raise ValueError("min_collections must be >= 0")


@dataclass
class EvalReport:
    topk: dict[int, float]
    classical_base: dict[int, float]
    kshot_base: dict[int, float]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        levels = sorted(self.topk)
        for low, high in zip(levels, levels[1:]):
            if self.topk[low] > self.topk[high] + 1e-12:
                raise ValueError("top-k accuracy must be non-decreasing in k")

    def to_json(self) -> dict:
        return {
            "topk": {str(k): v for k, v in self.topk.items()},
            "classical_base": {str(k): v for k, v in self.classical_base.items()},
            "kshot_base": {str(k): v for k, v in self.kshot_base.items()},
            "metadata": self.metadata,
        }

    def csv_rows(self) -> list[tuple[str, float]]:
        rows = [(f"top{k}", v) for k, v in sorted(self.topk.items())]
        rows += [(f"classical_base_{k}", v)
                 for k, v in sorted(self.classical_base.items())]
        rows += [(f"kshot_base_{k}", v) for k, v in sorted(self.kshot_base.items())]
        return rows


def _by_device(corpus) -> dict[str, list[FingerprintRecord]]:
    grouped: dict[str, list[FingerprintRecord]] = {}
    for record in corpus:
        grouped.setdefault(record.true_device, []).append(record)
    for records in grouped.values():
        records.sort(key=lambda r: r.collected_at)
    return grouped


def _trace_embeddings(weights: EmbedderWeights, records) -> np.ndarray:
    matrices = np.stack([preprocess(t).matrix
                         for record in records for t in record.traces])
    return embed_batch(weights, matrices)


def _score(gallery, query_embeddings, query_truths, device_count) -> EvalReport:
    predictions = [knn_topk(gallery, e, max(TOPK_LEVELS))
                   for e in query_embeddings]
    gallery_labels = [label for _, label in gallery]
    topk = {k: topk_accuracy(predictions, query_truths, k) for k in TOPK_LEVELS}
    classical = {k: base_rate_classical(gallery_labels, k) for k in TOPK_LEVELS}
    kshot = {k: base_rate_kshot(device_count, min(k, device_count))
             for k in TOPK_LEVELS}
    return EvalReport(topk=topk, classical_base=classical, kshot_base=kshot)


def run_random_split(corpus, weights: EmbedderWeights,
                     spec: SplitSpec) -> EvalReport:
    """Memorize a stratified 80% of traces per device, query the rest."""
    grouped = _by_device(corpus)
    kept = {device: records for device, records in grouped.items()
            if len(records) >= spec.min_collections}
    if len(kept) < 2:
        raise InsufficientData(
            f"{len(kept)} devices meet min_collections={spec.min_collections}")

    rng = np.random.default_rng([spec.seed, 0x5911])
    gallery: list[tuple[np.ndarray, str]] = []
    query_embeddings: list[np.ndarray] = []
    query_truths: list[str] = []
    for device in sorted(kept):
        embeddings = _trace_embeddings(weights, kept[device])
        if embeddings.shape[0] < 2:
            raise InsufficientData(f"device {device} has a single trace")
        order = rng.permutation(embeddings.shape[0])
        cut = max(1, min(embeddings.shape[0] - 1,
                         int(round(embeddings.shape[0] * spec.train_fraction))))
        for i in order[:cut]:
            gallery.append((embeddings[i], device))
        for i in order[cut:]:
            query_embeddings.append(embeddings[i])
            query_truths.append(device)

    report = _score(gallery, query_embeddings, query_truths, len(kept))
    report.metadata = {
        "mode": "random-split",
        "devices": len(kept),
        "gallery_traces": len(gallery),
        "query_traces": len(query_truths),
        "seed": spec.seed,
    }
    return report


def run_kshot(corpus, weights: EmbedderWeights, k: int,
              min_collections: int = 0) -> EvalReport:
    """Memorize each device's first k collections, query everything after."""
    if k < 1:
        raise ValueError("k must be >= 1")
    grouped = _by_device(corpus)
    kept = {device: records for device, records in grouped.items()
            if len(records) >= min_collections}
    if len(kept) < 2:
        raise InsufficientData("need at least two devices")
    short = sorted(d for d, records in kept.items() if len(records) <= k)
    if short:
        raise InsufficientCollections(
            f"devices {short} lack more than k={k} collections")

    gallery: list[tuple[np.ndarray, str]] = []
    query_embeddings: list[np.ndarray] = []
    query_truths: list[str] = []
    for device in sorted(kept):
        records = kept[device]
        for embedding in _trace_embeddings(weights, records[:k]):
            gallery.append((embedding, device))
        rest = _trace_embeddings(weights, records[k:])
        query_embeddings.extend(rest)
        query_truths.extend([device] * rest.shape[0])

    report = _score(gallery, query_embeddings, query_truths, len(kept))
    report.metadata = {
        "mode": f"kshot:{k}",
        "devices": len(kept),
        "gallery_traces": len(gallery),
        "query_traces": len(query_truths),
    }
    return report


# --- tracking replay ---

def subsample_period(records: list[FingerprintRecord],
                     period_days: float) -> list[FingerprintRecord]:
    """Earliest record in each period-long window from the device's start."""
    if not records:
        return []
    ordered = sorted(records, key=lambda r: r.collected_at)
    width = timedelta(days=period_days)
    kept = []
    window_end = ordered[0].collected_at
    for record in ordered:
        if record.collected_at >= window_end:
            kept.append(record)
            window_end = record.collected_at + width
    return kept


def correctly_linked_spans(assignments: list[tuple[FingerprintRecord, str]]
                           ) -> dict[str, float]:
    """Longest correctly-linked span in days for every true device.

    Records sharing an assigned id form a chain in replay order; the chain
    counts for a device only along maximal runs where consecutive records
    keep coming from that one device.
    """
    chains: dict[str, list[FingerprintRecord]] = {}
    for record, assigned in assignments:
        chains.setdefault(assigned, []).append(record)

    best: dict[str, float] = {}
    for records in chains.values():
        run_start = 0
        for i in range(len(records) + 1):
            boundary = (i == len(records)
                        or records[i].true_device != records[run_start].true_device)
            if not boundary:
                continue
            run = records[run_start:i]
            device = run[0].true_device
            span = (run[-1].collected_at - run[0].collected_at).total_seconds() / 86400.0
            best[device] = max(best.get(device, 0.0), span)
            run_start = i
    for record, _ in assignments:
        best.setdefault(record.true_device, 0.0)
    return best


@dataclass
class TrackingRow:
    period_days: float
    baseline_mean: float
    baseline_median: float
    hybrid_mean: float
    hybrid_median: float

    @property
    def improvement_pct(self) -> float:
        if self.baseline_median == 0.0:
            return math.inf if self.hybrid_median > 0.0 else 0.0
        return 100.0 * (self.hybrid_median - self.baseline_median) / self.baseline_median


def _replay(corpus, cfg: LinkerConfig, forest, weights, cache) -> list[str]:
    matcher = Matcher(cfg, forest=forest, weights=weights, embedding_cache=cache)
    return [matcher.observe(record).assigned_id for record in corpus]


def run_tracking(corpus, baseline_cfg: LinkerConfig, hybrid_cfg: LinkerConfig,
                 forest: ForestModel, weights: EmbedderWeights | None,
                 periods=DEFAULT_TRACKING_PERIODS) -> list[TrackingRow]:
    """Replay period-subsampled corpora through both linker configurations."""
    if not corpus:
        raise EmptyDataset("empty corpus")
    times = [r.collected_at for r in corpus]
    span_days = (max(times) - min(times)).total_seconds() / 86400.0
    largest = max(periods)
    if span_days < 8.0 * largest:
        raise SpanTooShort(
            f"corpus spans {span_days:.1f} days, needs {8.0 * largest:.0f}")

    grouped = _by_device(corpus)
    cache: dict = {}
    rows = []
    for period in periods:
        replay: list[FingerprintRecord] = []
        for device in sorted(grouped):
            replay.extend(subsample_period(grouped[device], float(period)))
        replay.sort(key=lambda r: (r.collected_at, r.client_id))

        durations = []
        for cfg in (baseline_cfg, hybrid_cfg):
            assigned = _replay(replay, cfg, forest, weights, cache)
            spans = correctly_linked_spans(list(zip(replay, assigned)))
            durations.append(np.asarray([spans[d] for d in sorted(spans)]))
        baseline, hybrid = durations
        rows.append(TrackingRow(
            period_days=float(period),
            baseline_mean=float(baseline.mean()),
            baseline_median=float(np.median(baseline)),
            hybrid_mean=float(hybrid.mean()),
            hybrid_median=float(np.median(hybrid)),
        ))
    return rows


# --- corpus partitioning ---

def make_splits(corpus, boundaries, *, train_device_fraction: float = 0.65,
                min_collections: int = 0, seed: int = 0) -> dict[str, list]:
    """Time-partitioned subsets plus a device-level train/holdout cut.

    Records strictly before boundaries[i] land in part i; the first part is
    additionally split 65/35 by device (floor rounding), with the
    min-collections filter applied to the train side only.
    """
    boundaries = list(boundaries)
    if boundaries != sorted(boundaries):
        raise ValueError("boundaries must be ordered")
    parts: list[list[FingerprintRecord]] = [[] for _ in range(len(boundaries) + 1)]
    for record in sorted(corpus, key=lambda r: (r.collected_at, r.client_id)):
        slot = len(boundaries)
        for i, boundary in enumerate(boundaries):
            if record.collected_at < boundary:
                slot = i
                break
        parts[slot].append(record)

    named = {f"part{i + 1}": part for i, part in enumerate(parts)}
    first = parts[0]
    devices = sorted({r.true_device for r in first})
    rng = np.random.default_rng([seed, 0x5817])
    order = [devices[i] for i in rng.permutation(len(devices))]
    cut = int(len(order) * train_device_fraction)
    train_devices = set(order[:cut])
    train = [r for r in first if r.true_device in train_devices]
    holdout = [r for r in first if r.true_device not in train_devices]
    if min_collections > 0:
        counts = Counter(r.true_device for r in train)
        keep = {d for d, c in counts.items() if c >= min_collections}
        train = [r for r in train if r.true_device in keep]
    named["train"] = train
    named["holdout"] = holdout
    return named
