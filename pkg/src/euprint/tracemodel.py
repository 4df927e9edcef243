"""Shared data model: collector configs, timing traces, fingerprint records,
validation, standardization, and the NDJSON wire format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

TRACES_PER_RECORD = 7
PREPROCESS_LENGTH = 1024
MATRIX_SIDE = 32

# Deterministic browser attributes collected next to the traces, in canonical
# order. Serialization, feature vectors and rule screening all iterate this.
ATTRIBUTE_KEYS: tuple[str, ...] = (
    "cookies_enabled",
    "session_storage_enabled",
    "http_accept",
    "http_accept_encoding",
    "http_accept_language",
    "http_user_agent",
    "navigator_dnt",
    "navigator_platform",
    "navigator_plugins",
    "screen_width",
    "screen_height",
    "timezone",
    "webgl_vendor",
    "webgl_renderer",
)


class Method(Enum):
    """How a trace was timed on the client."""

    ONSCREEN = "onscreen"
    OFFSCREEN = "offscreen"
    GPU_TIMER = "gpu"


class Operator(Enum):
    """Shader operator executed inside the stall loop."""

    SIN = "sin"
    MUL = "mul"
    SINH = "sinh"
    EXP2 = "exp2"
    POW = "pow"
    ATANH = "atanh"
    ACOSH = "acosh"
    SQRT = "sqrt"
    FRACT = "fract"
    LOG2 = "log2"
    TANH = "tanh"


class ConfigError(ValueError):
    """Collector or record configuration violates a structural invariant."""


class LengthMismatch(ValueError):
    """Input length does not match what the operation requires."""


class MalformedDocument(ValueError):
    """Input is not a JSON object at all."""


class SchemaViolation(ValueError):
    """JSON parses but does not satisfy the record schema."""


class TraceIssue(Enum):
    """Machine-readable reasons a trace fails validation."""

    LENGTH_MISMATCH = "length_mismatch"
    NON_FINITE_TIMING = "non_finite_timing"
    NEGATIVE_TIMING = "negative_timing"


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    issues: tuple[TraceIssue, ...] = ()


@dataclass(frozen=True)
class CollectorConfig:
    """Parameters of one timing collection run.

    ``subset_mode`` stalls every bit-mask subset of the points instead of one
    point at a time; it needs a readback-timed method, so onscreen is
    rejected. The expected trace length follows from the mode: 2**point_count
    timings with subsets, point_count * iterations_per_point without.
    """

    method: Method
    operator: Operator
    point_count: int
    iterations_per_point: int
    subset_mode: bool
    stall_loop_length: int

    def __post_init__(self) -> None:
        if self.point_count < 1:
            raise ConfigError("point_count must be >= 1")
        if self.iterations_per_point < 1:
            raise ConfigError("iterations_per_point must be >= 1")
        if self.stall_loop_length < 0:
            raise ConfigError("stall_loop_length must be >= 0")
        if self.subset_mode and self.method is Method.ONSCREEN:
            raise ConfigError("subset_mode requires an offscreen or gpu method")

    @property
    def expected_trace_length(self) -> int:
        if self.subset_mode:
            return 2 ** self.point_count
        return self.point_count * self.iterations_per_point


@dataclass(frozen=True)
class Trace:
    """One timing vector plus the config that produced it.

    Construction is deliberately permissive; ``validate_trace`` decides
    whether the timings actually satisfy the config.
    """

    config: CollectorConfig
    timings: tuple[float, ...]
    collected_at: datetime
    client_id: str
    method_reported: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "timings", tuple(float(t) for t in self.timings))
        object.__setattr__(self, "collected_at", _as_utc(self.collected_at))


@dataclass(frozen=True, eq=False)
class PreprocessedTrace:
    """Z-scored trace reshaped to a 32x32 matrix, ready for the embedder."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.matrix.flags.writeable = False


@dataclass(frozen=True)
class FingerprintRecord:
    """One collection: seven traces plus the deterministic attributes.

    All seven traces must share a single collector config; the constructor
    enforces that so downstream code can rely on it.
    """

    client_id: str
    collected_at: datetime
    attributes: Mapping[str, object]
    traces: tuple[Trace, ...]
    true_device: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "collected_at", _as_utc(self.collected_at))
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "attributes", dict(self.attributes))
        if len(self.traces) != TRACES_PER_RECORD:
            raise ConfigError(
                f"record must hold exactly {TRACES_PER_RECORD} traces, got {len(self.traces)}"
            )
        configs = {t.config for t in self.traces}
        if len(configs) != 1:
            raise ConfigError("all traces in a record must share one collector config")

    @property
    def config(self) -> CollectorConfig:
        return self.traces[0].config


def _as_utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def validate_trace(trace: Trace) -> ValidationResult:
    """Check a trace against its config; collects every issue, not just the first."""
    issues: list[TraceIssue] = []
    if len(trace.timings) != trace.config.expected_trace_length:
        issues.append(TraceIssue.LENGTH_MISMATCH)
    if any(not math.isfinite(t) for t in trace.timings):
        issues.append(TraceIssue.NON_FINITE_TIMING)
    if any(math.isfinite(t) and t < 0.0 for t in trace.timings):
        issues.append(TraceIssue.NEGATIVE_TIMING)
    return ValidationResult(ok=not issues, issues=tuple(issues))


def preprocess(trace: Trace) -> PreprocessedTrace:
    """Z-score a 1024-timing trace (population std) and reshape row-major to 32x32.

    A constant trace has zero std and maps to the all-zero matrix instead of
    dividing by zero.
    """
    arr = np.asarray(trace.timings, dtype=np.float64)
    if arr.size != PREPROCESS_LENGTH:
        raise LengthMismatch(
            f"preprocess needs {PREPROCESS_LENGTH} timings, got {arr.size}"
        )
    std = float(arr.std())
    if std == 0.0:
        z = np.zeros_like(arr)
    else:
        z = (arr - arr.mean()) / std
    return PreprocessedTrace(matrix=z.reshape(MATRIX_SIDE, MATRIX_SIDE))


# --- NDJSON wire format ---

_TOP_LEVEL_KEYS = ("client_id", "collected_at", "attributes", "traces", "true_device")
_TRACE_KEYS = (
    "method",
    "operator",
    "point_count",
    "iterations_per_point",
    "subset_mode",
    "stall_loop_length",
    "timings",
)


def format_timestamp(dt: datetime) -> str:
    """UTC ISO-8601 with a trailing Z; fractional seconds only when non-zero.

    Trimming a zero fraction keeps document round trips byte-identical for
    whole-second inputs while still carrying sub-second precision when the
    datetime has any.
    """
    dt = _as_utc(dt)
    text = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if dt.microsecond:
        if dt.microsecond % 1000:
            text += f".{dt.microsecond:06d}"
        else:
            text += f".{dt.microsecond // 1000:03d}"
    return text + "Z"


def parse_timestamp(text: str) -> datetime:
    if not isinstance(text, str) or not text.endswith("Z"):
        raise SchemaViolation(f"timestamp must be ISO-8601 UTC ending in Z: {text!r}")
    try:
        dt = datetime.fromisoformat(text[:-1])
    except ValueError as exc:
        raise SchemaViolation(f"bad timestamp {text!r}") from exc
    if dt.tzinfo is not None:
        raise SchemaViolation(f"timestamp must not carry an offset besides Z: {text!r}")
    return dt.replace(tzinfo=timezone.utc)


def trace_to_dict(trace: Trace) -> dict:
    cfg = trace.config
    return {
        "method": cfg.method.value,
        "operator": cfg.operator.value,
        "point_count": cfg.point_count,
        "iterations_per_point": cfg.iterations_per_point,
        "subset_mode": cfg.subset_mode,
        "stall_loop_length": cfg.stall_loop_length,
        "timings": list(trace.timings),
    }


def record_to_dict(record: FingerprintRecord) -> dict:
    return {
        "client_id": record.client_id,
        "collected_at": format_timestamp(record.collected_at),
        "attributes": dict(record.attributes),
        "traces": [trace_to_dict(t) for t in record.traces],
        "true_device": record.true_device,
    }


def serialize_record(record: FingerprintRecord) -> bytes:
    """One NDJSON line (no trailing newline), ASCII-safe, float-exact."""
    return json.dumps(record_to_dict(record), separators=(",", ":")).encode("ascii")


def _require(obj: dict, key: str, kinds: tuple[type, ...], where: str) -> object:
    if key not in obj:
        raise SchemaViolation(f"{where} missing required field {key!r}")
    value = obj[key]
    if isinstance(value, bool) and bool not in kinds:
        raise SchemaViolation(f"{where} field {key!r} has wrong type bool")
    if not isinstance(value, kinds):
        raise SchemaViolation(
            f"{where} field {key!r} has wrong type {type(value).__name__}"
        )
    return value


def _parse_trace(obj: object, client_id: str, collected_at: datetime,
                 method_reported: str, where: str) -> Trace:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where} must be an object")
    unknown = set(obj) - set(_TRACE_KEYS)
    if unknown:
        raise SchemaViolation(f"{where} has unknown fields {sorted(unknown)}")
    method_raw = _require(obj, "method", (str,), where)
    operator_raw = _require(obj, "operator", (str,), where)
    try:
        method = Method(method_raw)
    except ValueError as exc:
        raise SchemaViolation(f"{where} unknown method {method_raw!r}") from exc
    try:
        operator = Operator(operator_raw)
    except ValueError as exc:
        raise SchemaViolation(f"{where} unknown operator {operator_raw!r}") from exc
    try:
        cfg = CollectorConfig(
            method=method,
            operator=operator,
            point_count=_require(obj, "point_count", (int,), where),
            iterations_per_point=_require(obj, "iterations_per_point", (int,), where),
            subset_mode=_require(obj, "subset_mode", (bool,), where),
            stall_loop_length=_require(obj, "stall_loop_length", (int,), where),
        )
    except ConfigError as exc:
        raise SchemaViolation(f"{where}: {exc}") from exc
    timings = _require(obj, "timings", (list,), where)
    for t in timings:
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise SchemaViolation(f"{where} timings must be numbers")
    return Trace(
        config=cfg,
        timings=tuple(float(t) for t in timings),
        collected_at=collected_at,
        client_id=client_id,
        method_reported=method_reported,
    )


def parse_record(data: bytes | str) -> FingerprintRecord:
    """Parse one NDJSON line. Unknown top-level fields are rejected outright."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedDocument("document must be a JSON object")
    unknown = set(obj) - set(_TOP_LEVEL_KEYS)
    if unknown:
        raise SchemaViolation(f"unknown top-level fields {sorted(unknown)}")
    client_id = _require(obj, "client_id", (str,), "record")
    collected_at = parse_timestamp(_require(obj, "collected_at", (str,), "record"))
    attributes = _require(obj, "attributes", (dict,), "record")
    missing = set(ATTRIBUTE_KEYS) - set(attributes)
    if missing:
        raise SchemaViolation(f"attributes missing keys {sorted(missing)}")
    extra = set(attributes) - set(ATTRIBUTE_KEYS)
    if extra:
        raise SchemaViolation(f"attributes has unknown keys {sorted(extra)}")
    for key, value in attributes.items():
        if not isinstance(value, (str, int, bool)):
            raise SchemaViolation(f"attribute {key!r} must be a scalar")
    traces_raw = _require(obj, "traces", (list,), "record")
    if "true_device" not in obj:
        raise SchemaViolation("record missing required field 'true_device'")
    true_device = obj["true_device"]
    if true_device is not None and not isinstance(true_device, str):
        raise SchemaViolation("true_device must be a string or null")
    renderer = str(attributes.get("webgl_renderer", ""))
    traces = [
        _parse_trace(t, client_id, collected_at, renderer, f"traces[{i}]")
        for i, t in enumerate(traces_raw)
    ]
    try:
        return FingerprintRecord(
            client_id=client_id,
            collected_at=collected_at,
            attributes={k: attributes[k] for k in ATTRIBUTE_KEYS},
            traces=tuple(traces),
            true_device=true_device,
        )
    except ConfigError as exc:
        raise SchemaViolation(str(exc)) from exc


def write_corpus(records: Iterable[FingerprintRecord], path: str | Path) -> int:
    """Write records as NDJSON; returns the number written."""
    count = 0
    with open(path, "wb") as fh:
        for record in records:
            fh.write(serialize_record(record))
            fh.write(b"\n")
            count += 1
    return count


def iter_corpus(path: str | Path) -> Iterator[FingerprintRecord]:
    with open(path, "rb") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield parse_record(line)


def read_corpus(path: str | Path) -> list[FingerprintRecord]:
    return list(iter_corpus(path))
