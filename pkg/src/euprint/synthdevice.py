"""Seeded generative simulator of execution-unit timing traces.

Ground truth is a per-device vector of EU speed multipliers. An iteration's
raw duration is the slowest stalled EU's time, advanced-math units add a
contention surcharge for transcendental operators, and a timer model
quantizes the result the way the collection method would.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .tracemodel import (
    CollectorConfig,
    FingerprintRecord,
    Method,
    Operator,
    Trace,
    parse_timestamp,
)

DEFAULT_AM_CONTENTION = 0.25

# Operators served by the advanced-math units; the plain ALU ops stay free of
# contention. Transcendental = trig, hyperbolic, exponential and log family.
AM_OPERATORS = frozenset(
    {
        Operator.SIN,
        Operator.SINH,
        Operator.TANH,
        Operator.ATANH,
        Operator.ACOSH,
        Operator.EXP2,
        Operator.POW,
        Operator.LOG2,
    }
)

# Effective milliseconds per single stall-loop operation. Scaled by
# stall_loop_length these put one stalled point in the low-millisecond range
# at the default loop lengths used in scenarios.
DEFAULT_OPERATOR_COST: Mapping[Operator, float] = {
    Operator.MUL: 0.00040,
    Operator.FRACT: 0.00042,
    Operator.SQRT: 0.00055,
    Operator.LOG2: 0.00075,
    Operator.EXP2: 0.00080,
    Operator.SIN: 0.00095,
    Operator.TANH: 0.00100,
    Operator.ATANH: 0.00105,
    Operator.ACOSH: 0.00110,
    Operator.POW: 0.00115,
    Operator.SINH: 0.00120,
}

# Browser-version drift reuses the restart mechanism with a larger sigma.
BROWSER_DRIFT_SIGMA = 0.05

_EPOCH = datetime(2021, 3, 1, tzinfo=timezone.utc)


class TimerKind(Enum):
    FRAME_QUANTIZED = "frame_quantized"
    MILLISECOND_JITTER = "millisecond_jitter"
    MICROSECOND_EXACT = "microsecond_exact"


@dataclass(frozen=True)
class TimerModel:
    """Quantization applied to raw durations.

    FrameQuantized rounds up to whole display frames, MillisecondJitter
    snaps to a coarse quantum and adds uniform jitter (defaulting to
    +/- one quantum), MicrosecondExact just rounds to 1 us.
    """

    kind: TimerKind
    frame_period_ms: float = 16.666
    quantum_ms: float = 0.005
    jitter_ms: float | None = None

    def __post_init__(self) -> None:
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be positive")
        if self.quantum_ms <= 0:
            raise ValueError("quantum_ms must be positive")
        if self.jitter_ms is not None and self.jitter_ms < 0:
            raise ValueError("jitter_ms must be non-negative")

    @property
    def effective_jitter_ms(self) -> float:
        if self.jitter_ms is None:
            return self.quantum_ms
        return self.jitter_ms


@dataclass(frozen=True)
class DispatchPolicy:
    randomized: bool = False


@dataclass(frozen=True)
class DeviceProfile:
    """Per-device ground truth the simulator draws traces from."""

    device_id: str
    eu_count: int
    eu_speed: tuple[float, ...]
    am_unit_map: tuple[int, ...]
    operator_cost: Mapping[Operator, float]
    within_noise_sigma: float
    restart_drift_sigma: float
    session_seed: int
    device_class: str = "generic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "eu_speed", tuple(float(s) for s in self.eu_speed))
        object.__setattr__(self, "am_unit_map", tuple(int(u) for u in self.am_unit_map))
        object.__setattr__(self, "operator_cost", dict(self.operator_cost))
        if self.eu_count < 1:
            raise ValueError("eu_count must be >= 1")
        if len(self.eu_speed) != self.eu_count:
            raise ValueError("eu_speed length must equal eu_count")
        if any(s <= 0 for s in self.eu_speed):
            raise ValueError("eu_speed entries must be positive")
        if len(self.am_unit_map) != self.eu_count:
            raise ValueError("am_unit_map length must equal eu_count")
        if self.within_noise_sigma < 0 or self.restart_drift_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")


def dispatch(point_index: int, eu_count: int, policy: DispatchPolicy, rng) -> int:
    """EU that runs a point: round-robin modulo when deterministic, uniform otherwise."""
    if point_index < 0:
        raise ValueError("point_index must be non-negative")
    if policy.randomized:
        return int(rng.integers(0, eu_count))
    return point_index % eu_count


def _stall_sets(cfg: CollectorConfig) -> np.ndarray:
    """Boolean (iterations, point_count) matrix of which points stall when."""
    p = cfg.point_count
    if cfg.subset_mode:
        masks = np.arange(2 ** p, dtype=np.uint32)
        return ((masks[:, None] >> np.arange(p)) & 1).astype(bool)
    n = p * cfg.iterations_per_point
    stalled = np.zeros((n, p), dtype=bool)
    # point-major layout: one block of iterations per stalled point
    stalled[np.arange(n), np.repeat(np.arange(p), cfg.iterations_per_point)] = True
    return stalled


def _quantize(raw: np.ndarray, timer: TimerModel, rng) -> np.ndarray:
    if timer.kind is TimerKind.FRAME_QUANTIZED:
        return np.ceil(raw / timer.frame_period_ms) * timer.frame_period_ms
    if timer.kind is TimerKind.MILLISECOND_JITTER:
        q = timer.quantum_ms
        snapped = np.round(raw / q) * q
        j = timer.effective_jitter_ms
        if j > 0:
            snapped = snapped + rng.uniform(-j, j, size=raw.shape)
        return np.maximum(snapped, 0.0)
    return np.round(raw / 0.001) * 0.001


def sample_trace(
    profile: DeviceProfile,
    cfg: CollectorConfig,
    timer: TimerModel,
    policy: DispatchPolicy,
    rng,
    *,
    am_contention: float = DEFAULT_AM_CONTENTION,
    collected_at: datetime | None = None,
    client_id: str | None = None,
    renderer: str | None = None,
) -> Trace:
    """Draw one trace: per iteration, duration is the slowest stalled EU.

    stall time = loop_length * operator_cost * eu_speed * (1 + contention)
    * (1 + gaussian noise); contention is the advanced-math surcharge per
    co-resident stalled point, zero for plain ALU operators. The timer model
    then quantizes every duration.
    """
    stalled = _stall_sets(cfg)
    n_iter, n_points = stalled.shape
    t_idx, p_idx = np.nonzero(stalled)

    if policy.randomized:
        eu = rng.integers(0, profile.eu_count, size=t_idx.size)
    else:
        eu = p_idx % profile.eu_count

    speed = np.asarray(profile.eu_speed)[eu]
    base = cfg.stall_loop_length * profile.operator_cost[cfg.operator]

    contention = np.zeros(t_idx.size)
    if cfg.operator in AM_OPERATORS and am_contention > 0 and t_idx.size:
        units = np.asarray(profile.am_unit_map)[eu]
        n_units = int(max(profile.am_unit_map)) + 1
        counts = np.zeros((n_iter, n_units))
        np.add.at(counts, (t_idx, units), 1.0)
        contention = am_contention * (counts[t_idx, units] - 1.0)

    if profile.within_noise_sigma > 0:
        noise = rng.normal(0.0, profile.within_noise_sigma, size=t_idx.size)
    else:
        noise = np.zeros(t_idx.size)
    factor = np.maximum(1.0 + noise, 0.0)

    stall_time = base * speed * (1.0 + contention) * factor
    raw = np.zeros(n_iter)
    np.maximum.at(raw, t_idx, stall_time)

    timings = _quantize(raw, timer, rng)
    return Trace(
        config=cfg,
        timings=tuple(timings.tolist()),
        collected_at=collected_at or _EPOCH,
        client_id=client_id or f"sim-{profile.device_id}",
        method_reported=renderer or renderer_string(profile.device_class, profile.eu_count),
    )


def restart(profile: DeviceProfile, rng) -> DeviceProfile:
    """Re-draw EU speeds around their current values, as a power cycle would."""
    return _drift(profile, rng, profile.restart_drift_sigma)


def browser_update(profile: DeviceProfile, rng) -> DeviceProfile:
    """Larger-sigma variant of restart standing in for a browser version change."""
    return _drift(profile, rng, BROWSER_DRIFT_SIGMA)


def _drift(profile: DeviceProfile, rng, sigma: float) -> DeviceProfile:
    if sigma == 0:
        return profile
    factor = 1.0 + rng.normal(0.0, sigma, size=profile.eu_count)
    speed = np.maximum(np.asarray(profile.eu_speed) * factor, 1e-6)
    return replace(profile, eu_speed=tuple(speed.tolist()))


def sort_timings(trace: Trace) -> Trace:
    """Ascending copy of a trace: the multiset survives, the order does not."""
    return replace(trace, timings=tuple(sorted(trace.timings)))


# --- attribute templates ---

_PLATFORMS = (
    ("Win32", "Windows NT 10.0; Win64; x64"),
    ("MacIntel", "Macintosh; Intel Mac OS X 10_15_7"),
    ("Linux x86_64", "X11; Linux x86_64"),
)
_SCREENS = ((1920, 1080), (2560, 1440), (1366, 768), (1536, 864), (3840, 2160))
_TIMEZONES = ("Europe/Paris", "America/New_York", "Asia/Tokyo", "Europe/London")
_LANGUAGES = ("en-US,en;q=0.9", "fr-FR,fr;q=0.9,en;q=0.8", "de-DE,de;q=0.9", "ja-JP,ja;q=0.9")
_PLUGIN_SETS = (
    "PDF Viewer,Chrome PDF Viewer",
    "PDF Viewer,Chrome PDF Viewer,Native Client",
    "PDF Viewer",
)

UA_BASE_VERSION = (96, 4664, 45)


def renderer_string(device_class: str, eu_count: int) -> str:
    return f"ANGLE ({device_class} Graphics, {eu_count} EU, Direct3D11)"


def user_agent(os_token: str, major: int, build: int, patch: int) -> str:
    return (
        f"Mozilla/5.0 ({os_token}) AppleWebKit/537.36 (KHTML, like Gecko) "
        f"Chrome/{major}.0.{build}.{patch} Safari/537.36"
    )


def class_attribute_template(device_class: str, eu_count: int) -> dict:
    """Deterministic attribute map for a device class.

    Derivation hashes the class name with crc32 so the same class always
    yields the same template, regardless of process or insertion order.
    """
    h = zlib.crc32(device_class.encode("utf-8"))
    platform, os_token = _PLATFORMS[h % len(_PLATFORMS)]
    width, height = _SCREENS[(h // 7) % len(_SCREENS)]
    major, build, patch = UA_BASE_VERSION
    return {
        "cookies_enabled": True,
        "session_storage_enabled": True,
        "http_accept": "text/html,application/xhtml+xml,application/xml;q=0.9,*/*;q=0.8",
        "http_accept_encoding": "gzip, deflate, br",
        "http_accept_language": _LANGUAGES[(h // 3) % len(_LANGUAGES)],
        "http_user_agent": user_agent(os_token, major, build, patch),
        "navigator_dnt": "1" if h % 2 else "unspecified",
        "navigator_platform": platform,
        "navigator_plugins": _PLUGIN_SETS[(h // 5) % len(_PLUGIN_SETS)],
        "screen_width": width,
        "screen_height": height,
        "timezone": _TIMEZONES[(h // 11) % len(_TIMEZONES)],
        "webgl_vendor": "Google Inc.",
        "webgl_renderer": renderer_string(device_class, eu_count),
    }


def generate_corpus(
    profiles: Sequence[DeviceProfile],
    cfg: CollectorConfig,
    timer: TimerModel,
    policy: DispatchPolicy,
    traces_per_device: int,
    collections: int,
    period_hours: float,
    rng,
    *,
    start_time: datetime | None = None,
    ua_update_probability: float = 0.0,
    am_contention: float = DEFAULT_AM_CONTENTION,
) -> list[FingerprintRecord]:
    """Simulate `collections` records per device, period_hours apart.

    Each device owns an independent generator derived from `rng`, so corpora
    are bit-identical for identical seeds no matter how devices are ordered
    for execution. Devices of one class share one attribute template; with
    ua_update_probability > 0 each device's Chrome patch number random-walks
    upward, desynchronizing otherwise identical templates over time.
    """
    if traces_per_device < 7:
        raise ValueError("traces_per_device must be >= 7")
    start = start_time or _EPOCH
    child_seeds = [int(s) for s in rng.integers(0, 2 ** 63, size=len(profiles))]
    records: list[FingerprintRecord] = []
    for index, profile in enumerate(profiles):
        drng = np.random.default_rng(child_seeds[index])
        template = class_attribute_template(profile.device_class, profile.eu_count)
        major, build, patch = UA_BASE_VERSION
        _, os_token = _PLATFORMS[
            zlib.crc32(profile.device_class.encode("utf-8")) % len(_PLATFORMS)
        ]
        client_id = f"client-{profile.device_id}"
        renderer = template["webgl_renderer"]
        device_start = start + timedelta(minutes=index)
        for c in range(collections):
            if c > 0 and ua_update_probability > 0:
                if drng.random() < ua_update_probability:
                    patch += int(drng.integers(1, 16))
            when = device_start + timedelta(hours=period_hours * c)
            traces = tuple(
                sample_trace(
                    profile,
                    cfg,
                    timer,
                    policy,
                    drng,
                    am_contention=am_contention,
                    collected_at=when,
                    client_id=client_id,
                    renderer=renderer,
                )
                for _ in range(traces_per_device)
            )[:7]
            attributes = dict(template)
            attributes["http_user_agent"] = user_agent(os_token, major, build, patch)
            records.append(
                FingerprintRecord(
                    client_id=client_id,
                    collected_at=when,
                    attributes=attributes,
                    traces=traces,
                    true_device=profile.device_id,
                )
            )
    records.sort(key=lambda r: (r.collected_at, r.client_id))
    return records


# --- scenario files ---

@dataclass(frozen=True)
class DeviceClassSpec:
    """One class of identical-attribute devices in a scenario."""

    name: str
    device_count: int
    eu_count: int
    eu_speed_spread: float
    within_noise_sigma: float = 0.005
    restart_drift_sigma: float = 0.0
    am_unit_count: int | None = None
    operator_cost_scale: float = 1.0
    class_speed_spread: float = 0.0


def make_profiles(classes: Sequence[DeviceClassSpec], rng) -> list[DeviceProfile]:
    """Draw per-device EU speeds around a per-class center profile.

    class_speed_spread > 0 gives every class one shared speed signature (the
    silicon design); eu_speed_spread is the per-device variation on top of it.
    """
    profiles = []
    for spec in classes:
        am_units = spec.am_unit_count or max(1, spec.eu_count // 3)
        group = -(-spec.eu_count // am_units)  # ceil division
        am_map = tuple(min(i // group, am_units - 1) for i in range(spec.eu_count))
        cost = {
            op: base * spec.operator_cost_scale
            for op, base in DEFAULT_OPERATOR_COST.items()
        }
        center = 1.0 + rng.normal(0.0, spec.class_speed_spread, size=spec.eu_count) \
            if spec.class_speed_spread > 0 else np.ones(spec.eu_count)
        for i in range(spec.device_count):
            speed = center * (1.0 + rng.normal(0.0, spec.eu_speed_spread, size=spec.eu_count))
            profiles.append(
                DeviceProfile(
                    device_id=f"{spec.name}-{i:02d}",
                    eu_count=spec.eu_count,
                    eu_speed=tuple(np.maximum(speed, 0.05).tolist()),
                    am_unit_map=am_map,
                    operator_cost=cost,
                    within_noise_sigma=spec.within_noise_sigma,
                    restart_drift_sigma=spec.restart_drift_sigma,
                    session_seed=int(rng.integers(0, 2 ** 31)),
                    device_class=spec.name,
                )
            )
    return profiles


def load_scenario(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def run_scenario(scenario: Mapping) -> list[FingerprintRecord]:
    """Build profiles from a scenario mapping and generate its corpus."""
    rng = np.random.default_rng(int(scenario.get("seed", 0)))
    classes = [DeviceClassSpec(**c) for c in scenario["classes"]]
    profiles = make_profiles(classes, rng)
    collector = scenario["collector"]
    cfg = CollectorConfig(
        method=Method(collector["method"]),
        operator=Operator(collector["operator"]),
        point_count=int(collector["point_count"]),
        iterations_per_point=int(collector.get("iterations_per_point", 1)),
        subset_mode=bool(collector.get("subset_mode", False)),
        stall_loop_length=int(collector["stall_loop_length"]),
    )
    timer_spec = scenario.get("timer", {"kind": "millisecond_jitter"})
    timer = TimerModel(
        kind=TimerKind(timer_spec["kind"]),
        frame_period_ms=float(timer_spec.get("frame_period_ms", 16.666)),
        quantum_ms=float(timer_spec.get("quantum_ms", 0.005)),
        jitter_ms=timer_spec.get("jitter_ms"),
    )
    policy = DispatchPolicy(
        randomized=bool(scenario.get("dispatch", {}).get("randomized", False))
    )
    start = scenario.get("start_time")
    return generate_corpus(
        profiles,
        cfg,
        timer,
        policy,
        traces_per_device=int(scenario.get("traces_per_device", 7)),
        collections=int(scenario.get("collections", 28)),
        period_hours=float(scenario.get("period_hours", 4.0)),
        rng=rng,
        start_time=parse_timestamp(start) if start else None,
        ua_update_probability=float(scenario.get("ua_update_probability", 0.0)),
        am_contention=float(scenario.get("am_contention", DEFAULT_AM_CONTENTION)),
    )
