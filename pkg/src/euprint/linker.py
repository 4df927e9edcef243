"""Fingerprint-evolution linking: rule screen, pair features, hybrid matcher.

The matcher walks a gallery of already-identified records and decides
whether an incoming record continues one of those chains or starts a new
one.  A cosine-similarity short circuit over averaged trace embeddings sits
in front of the pairwise forest; disabling it (similarity_threshold=None)
yields the plain rule-plus-forest matcher, which the tests replay as a
bit-exact baseline.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .embedder import EmbedderWeights, embed_record
from .forest import ForestModel, predict_proba_batch
from .tracemodel import ATTRIBUTE_KEYS, FingerprintRecord

DEFAULT_SIMILARITY_THRESHOLD = 0.15
DEFAULT_RANK_GAP = 0.10
DEFAULT_FOREST_THRESHOLD = 0.90
GAP_CAP_DAYS = 30.0

FEATURE_LENGTH = len(ATTRIBUTE_KEYS) + 5


class UntrainedModel(ValueError):
    """The candidate path needs a fitted pairwise forest."""


class InsufficientPairs(ValueError):
    """Similarity calibration needs same-device and cross-device pairs."""


class Screen(Enum):
    EXACT = "exact"
    CANDIDATE = "candidate"
    DISCARD = "discard"


# --- rule screen ---

_BROWSER_TOKEN = re.compile(r"(Firefox|Edg|OPR|Chrome|Safari)/(\d+)")


def browser_token(user_agent: str) -> tuple[str, int] | None:
    """(family, major version) from a user-agent string, None if unparseable."""
    match = _BROWSER_TOKEN.search(user_agent or "")
    if match is None:
        return None
    return match.group(1), int(match.group(2))


def _platform_differs(known, unknown) -> bool:
    return known["navigator_platform"] != unknown["navigator_platform"]


def _browser_family_differs(known, unknown) -> bool:
    a = browser_token(known["http_user_agent"])
    b = browser_token(unknown["http_user_agent"])
    if a is None or b is None:
        return False
    return a[0] != b[0]


def _browser_version_decreased(known, unknown) -> bool:
    # the unknown record is the later one; versions may only move forward
    a = browser_token(known["http_user_agent"])
    b = browser_token(unknown["http_user_agent"])
    if a is None or b is None or a[0] != b[0]:
        return False
    return b[1] < a[1]


def _timezone_and_language_differ(known, unknown) -> bool:
    return (known["timezone"] != unknown["timezone"]
            and known["http_accept_language"] != unknown["http_accept_language"])


@dataclass(frozen=True)
class RuleSet:
    """Ordered hard-inconsistency rules; any hit discards the pairing."""

    version: str
    hard_rules: tuple = ()

    def violations(self, known: dict, unknown: dict) -> list[str]:
        return [name for name, rule in self.hard_rules if rule(known, unknown)]


def default_rules() -> RuleSet:
    return RuleSet(
        version="v1",
        hard_rules=(
            ("platform", _platform_differs),
            ("browser-family", _browser_family_differs),
            ("browser-version-rollback", _browser_version_decreased),
            ("timezone-and-language", _timezone_and_language_differ),
        ),
    )


def rule_screen(known: FingerprintRecord, unknown: FingerprintRecord,
                rules: RuleSet) -> Screen:
    """Exact on identical attributes, Discard on a hard rule, else Candidate."""
    if rules.violations(known.attributes, unknown.attributes):
        return Screen.DISCARD
    if all(known.attributes[k] == unknown.attributes[k] for k in ATTRIBUTE_KEYS):
        return Screen.EXACT
    return Screen.CANDIDATE


# --- pair features ---

@lru_cache(maxsize=4096)
def _levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a or not b:
        return max(len(a), len(b))
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def ua_distance(a: str, b: str) -> float:
    """Levenshtein distance normalized by the longer string, 0 for two empties."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return _levenshtein(a, b) / longest


def link_feature_vector(known: FingerprintRecord,
                        unknown: FingerprintRecord) -> np.ndarray:
    """Fixed-order pair descriptor fed to the pairwise forest.

    Layout: one equality bit per attribute, normalized user-agent distance,
    differing-attribute count, time gap in days capped at 30, absolute
    screen width and height deltas.
    """
    ka, ua = known.attributes, unknown.attributes
    bits = [1.0 if ka[k] == ua[k] else 0.0 for k in ATTRIBUTE_KEYS]
    gap_days = abs((unknown.collected_at - known.collected_at).total_seconds()) / 86400.0
    return np.asarray(bits + [
        ua_distance(ka["http_user_agent"], ua["http_user_agent"]),
        float(sum(1.0 for b in bits if b == 0.0)),
        min(gap_days, GAP_CAP_DAYS),
        abs(float(ka["screen_width"]) - float(ua["screen_width"])),
        abs(float(ka["screen_height"]) - float(ua["screen_height"])),
    ], dtype=np.float64)


# --- matcher ---

@dataclass(frozen=True)
class LinkerConfig:
    forest_threshold: float = DEFAULT_FOREST_THRESHOLD
    similarity_threshold: float | None = DEFAULT_SIMILARITY_THRESHOLD
    rank_gap: float = DEFAULT_RANK_GAP
    rules: RuleSet = field(default_factory=default_rules)

    def __post_init__(self) -> None:
        if not 0.0 < self.forest_threshold < 1.0:
            raise ValueError("forest_threshold must lie in (0, 1)")
        if self.similarity_threshold is not None and \
                not -1.0 < self.similarity_threshold < 1.0:
            raise ValueError("similarity_threshold must lie in (-1, 1) or be None")
        if self.rank_gap < 0.0:
            raise ValueError("rank_gap must be >= 0")


@dataclass
class LinkChain:
    assigned_id: str
    records: list[FingerprintRecord] = field(default_factory=list)

    def append(self, record: FingerprintRecord) -> None:
        if self.records and record.collected_at <= self.records[-1].collected_at:
            raise ValueError("chain records must strictly increase in time")
        self.records.append(record)

    @property
    def true_devices(self) -> list[str]:
        return [r.true_device for r in self.records]


@dataclass
class MatchOutcome:
    assigned_id: str
    path: str  # exact | exact-conflict | similarity | forest | ambiguous | new
    forest_calls: int = 0
    similarity_checks: int = 0


@dataclass
class _GalleryEntry:
    record: FingerprintRecord
    assigned_id: str


def get_rank_and_filter(candidates: list[tuple[_GalleryEntry, float]],
                        rank_gap: float) -> list[tuple[_GalleryEntry, float]]:
    """Probability-descending order, recent-first ties; empty when the two
    leading candidates disagree on id by less than rank_gap."""
    ranked = sorted(
        candidates,
        key=lambda item: (-item[1], -item[0].record.collected_at.timestamp()),
    )
    if len(ranked) >= 2:
        (first, p1), (second, p2) = ranked[0], ranked[1]
        if first.assigned_id != second.assigned_id and p1 - p2 < rank_gap:
            return []
    return ranked


class Matcher:
    """Single-writer gallery replaying records through the hybrid decision.

    The similarity pass runs ahead of the forest: no forest probability can
    trigger an early return, so evaluating the whole screened set in one
    batched forest call after the (short-circuiting) similarity scan yields
    the same assignment as a per-entry interleave, only faster.
    """

    def __init__(self, cfg: LinkerConfig, forest: ForestModel | None = None,
                 weights: EmbedderWeights | None = None,
                 embedding_cache: dict | None = None):
        self.cfg = cfg
        self.forest = forest
        self.weights = weights
        self.gallery: list[_GalleryEntry] = []
        # shared across matchers replaying one corpus repeatedly
        self.embedding_cache = embedding_cache if embedding_cache is not None else {}
        self.total_forest_calls = 0
        self.total_similarity_checks = 0
        self._next_chain = 0

    # ids are sequential so replays are reproducible run to run
    def _new_id(self) -> str:
        self._next_chain += 1
        return f"chain-{self._next_chain:04d}"

    def _embedding(self, record: FingerprintRecord) -> np.ndarray:
        key = (record.client_id, record.collected_at)
        cached = self.embedding_cache.get(key)
        if cached is None:
            if self.weights is None:
                raise UntrainedModel("similarity path needs embedder weights")
            cached = embed_record(self.weights, record)
            self.embedding_cache[key] = cached
        return cached

    def decide(self, unknown: FingerprintRecord) -> MatchOutcome:
        """The matching decision alone; the gallery is not modified."""
        exact: list[_GalleryEntry] = []
        screened: list[_GalleryEntry] = []
        for entry in self.gallery:
            outcome = rule_screen(entry.record, unknown, self.cfg.rules)
            if outcome is Screen.EXACT:
                exact.append(entry)
            elif outcome is Screen.CANDIDATE:
                screened.append(entry)

        if exact:
            ids = {e.assigned_id for e in exact}
            if len(ids) == 1:
                return MatchOutcome(exact[0].assigned_id, "exact")
            return MatchOutcome(self._new_id(), "exact-conflict")

        similarity_checks = 0
        if screened and self.cfg.similarity_threshold is not None:
            unknown_embedding = self._embedding(unknown)
            for entry in screened:
                similarity_checks += 1
                cosine = float(self._embedding(entry.record) @ unknown_embedding)
                if cosine > self.cfg.similarity_threshold:
                    return MatchOutcome(entry.assigned_id, "similarity",
                                        0, similarity_checks)

        forest_calls = 0
        candidates: list[tuple[_GalleryEntry, float]] = []
        if screened:
            if self.forest is None:
                raise UntrainedModel("candidate path needs a pairwise forest")
            features = np.stack([link_feature_vector(e.record, unknown)
                                 for e in screened])
            probs = predict_proba_batch(self.forest, features)
            forest_calls = len(screened)
            same_column = self.forest.classes.index(1)
            for entry, p_same in zip(screened, probs[:, same_column]):
                if p_same >= self.cfg.forest_threshold:
                    candidates.append((entry, float(p_same)))

        if candidates:
            ranked = get_rank_and_filter(candidates, self.cfg.rank_gap)
            if ranked:
                return MatchOutcome(ranked[0][0].assigned_id, "forest",
                                    forest_calls, similarity_checks)
            return MatchOutcome(self._new_id(), "ambiguous",
                                forest_calls, similarity_checks)
        return MatchOutcome(self._new_id(), "new", forest_calls, similarity_checks)

    def enroll(self, record: FingerprintRecord, assigned_id: str) -> None:
        """Admit a record whose identity is already known."""
        self.gallery.append(_GalleryEntry(record=record, assigned_id=assigned_id))

    def observe(self, record: FingerprintRecord) -> MatchOutcome:
        """Decide, then admit the record to the gallery under its id."""
        outcome = self.decide(record)
        self.total_forest_calls += outcome.forest_calls
        self.total_similarity_checks += outcome.similarity_checks
        self.gallery.append(_GalleryEntry(record=record,
                                          assigned_id=outcome.assigned_id))
        return outcome

    def chains(self) -> list[LinkChain]:
        by_id: dict[str, LinkChain] = {}
        for entry in self.gallery:
            chain = by_id.setdefault(entry.assigned_id,
                                     LinkChain(assigned_id=entry.assigned_id))
            chain.append(entry.record)
        return list(by_id.values())


def match(gallery: list[tuple[FingerprintRecord, str]],
          unknown: FingerprintRecord, cfg: LinkerConfig,
          forest: ForestModel | None,
          weights: EmbedderWeights | None) -> str:
    """One-shot decision against a pre-identified gallery."""
    matcher = Matcher(cfg, forest, weights)
    taken = set()
    for record, assigned_id in gallery:
        matcher.enroll(record, assigned_id)
        taken.add(assigned_id)
    # keep generated ids clear of the caller's
    matcher._next_chain = len(taken)
    return matcher.decide(unknown).assigned_id


# --- pairwise forest training data ---

def pair_training_set(corpus: list[FingerprintRecord], rules: RuleSet, rng,
                      *, max_gap_days: float = GAP_CAP_DAYS
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Balanced (feature, same-device) pairs from a labeled corpus.

    Positives are all within-device pairs up to max_gap_days apart that
    survive the rule screen, so the forest sees the whole range of revisit
    gaps it must score later; negatives are an equal count of cross-device
    candidate pairs.
    """
    by_device: dict[str, list[FingerprintRecord]] = {}
    for record in corpus:
        by_device.setdefault(record.true_device, []).append(record)
    for records in by_device.values():
        records.sort(key=lambda r: r.collected_at)

    features, labels = [], []
    for records in by_device.values():
        for i, earlier in enumerate(records):
            for later in records[i + 1:]:
                gap = (later.collected_at - earlier.collected_at).total_seconds()
                if gap > max_gap_days * 86400.0:
                    break
                if rule_screen(earlier, later, rules) is not Screen.DISCARD:
                    features.append(link_feature_vector(earlier, later))
                    labels.append(1)
    positives = len(features)
    if positives == 0:
        raise InsufficientPairs("no same-device record pairs in the corpus")

    devices = sorted(by_device)
    if len(devices) < 2:
        raise InsufficientPairs("need records from at least two devices")
    negatives = 0
    attempts = 0
    while negatives < positives and attempts < 50 * positives:
        attempts += 1
        da, db = rng.choice(len(devices), size=2, replace=False)
        ra = by_device[devices[da]][int(rng.integers(len(by_device[devices[da]])))]
        rb = by_device[devices[db]][int(rng.integers(len(by_device[devices[db]])))]
        if ra.collected_at > rb.collected_at:
            ra, rb = rb, ra
        if rule_screen(ra, rb, rules) is Screen.DISCARD:
            continue
        features.append(link_feature_vector(ra, rb))
        labels.append(0)
        negatives += 1
    if negatives == 0:
        raise InsufficientPairs("every cross-device pair hit a discard rule")
    return np.stack(features), np.asarray(labels, dtype=np.int64)


# --- threshold calibration ---

def calibrate_epsilon(corpus: list[FingerprintRecord],
                      weights: EmbedderWeights) -> float:
    """5th percentile of same-device embedding similarity, plus 0.05 margin."""
    by_device: dict[str, list[np.ndarray]] = {}
    for record in corpus:
        by_device.setdefault(record.true_device, []).append(
            embed_record(weights, record))
    if len(by_device) < 2:
        raise InsufficientPairs("need records from at least two devices")

    same = []
    for embeddings in by_device.values():
        for a, b in zip(embeddings, embeddings[1:]):
            same.append(float(a @ b))
    if not same:
        raise InsufficientPairs("no device contributed two records")
    epsilon = float(np.percentile(same, 5.0)) + 0.05
    return float(min(max(epsilon, math.nextafter(-1.0, 0.0)),
                     math.nextafter(1.0, 0.0)))


DEFAULT_LAMBDA_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10)) + (0.995,)


def _pairwise_f1(assigned: list[str], truth: list[str]) -> float:
    tp = fp = fn = 0
    n = len(assigned)
    for i in range(n):
        for j in range(i + 1, n):
            predicted = assigned[i] == assigned[j]
            actual = truth[i] == truth[j]
            tp += predicted and actual
            fp += predicted and not actual
            fn += actual and not predicted
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def calibrate_lambda(corpus: list[FingerprintRecord], forest: ForestModel,
                     grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID,
                     *, holdout_fraction: float = 0.35,
                     rules: RuleSet | None = None) -> float:
    """Forest-threshold grid search scored by held-out pairwise linkage F1.

    Replays the corpus through the plain matcher (no similarity short
    circuit) at each grid value and scores co-assignment of the most recent
    records.  Ties break toward the larger threshold.
    """
    rules = rules if rules is not None else default_rules()
    ordered = sorted(corpus, key=lambda r: (r.collected_at, r.client_id))
    holdout_start = int(len(ordered) * (1.0 - holdout_fraction))

    best_lambda, best_score = None, -1.0
    for lam in grid:
        cfg = LinkerConfig(forest_threshold=lam, similarity_threshold=None,
                           rank_gap=DEFAULT_RANK_GAP, rules=rules)
        matcher = Matcher(cfg, forest=forest)
        assigned = [matcher.observe(record).assigned_id for record in ordered]
        score = _pairwise_f1(assigned[holdout_start:],
                             [r.true_device for r in ordered[holdout_start:]])
        if score >= best_score:
            best_score, best_lambda = score, lam
    return float(best_lambda)
