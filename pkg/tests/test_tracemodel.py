import json
import math
import statistics
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euprint.tracemodel import (
    ATTRIBUTE_KEYS,
    CollectorConfig,
    ConfigError,
    FingerprintRecord,
    LengthMismatch,
    MalformedDocument,
    Method,
    Operator,
    SchemaViolation,
    Trace,
    TraceIssue,
    format_timestamp,
    parse_record,
    parse_timestamp,
    preprocess,
    record_to_dict,
    serialize_record,
    validate_trace,
)

UTC = timezone.utc
T0 = datetime(2021, 2, 7, tzinfo=UTC)


def make_config(**kw):
    base = dict(
        method=Method.OFFSCREEN,
        operator=Operator.SINH,
        point_count=10,
        iterations_per_point=1,
        subset_mode=True,
        stall_loop_length=1200,
    )
    base.update(kw)
    return CollectorConfig(**base)


def make_trace(config=None, timings=None, **kw):
    config = config or make_config()
    if timings is None:
        timings = [1.0] * config.expected_trace_length
    base = dict(
        config=config,
        timings=timings,
        collected_at=T0,
        client_id="client-a",
        method_reported="Test GPU",
    )
    base.update(kw)
    return Trace(**base)


def make_attributes(**kw):
    attrs = {
        "cookies_enabled": True,
        "session_storage_enabled": True,
        "http_accept": "text/html",
        "http_accept_encoding": "gzip, deflate, br",
        "http_accept_language": "en-US,en;q=0.9",
        "http_user_agent": "Mozilla/5.0 Chrome/96.0.4664.110",
        "navigator_dnt": "1",
        "navigator_platform": "Win32",
        "navigator_plugins": "PDF Viewer",
        "screen_width": 1920,
        "screen_height": 1080,
        "timezone": "Europe/Paris",
        "webgl_vendor": "Google Inc. (Intel)",
        "webgl_renderer": "Test GPU",
    }
    attrs.update(kw)
    return attrs


def make_record(n_traces=7, config=None, **kw):
    config = config or make_config()
    base = dict(
        client_id="client-a",
        collected_at=T0,
        attributes=make_attributes(),
        traces=tuple(make_trace(config=config) for _ in range(n_traces)),
        true_device="device-0",
    )
    base.update(kw)
    return FingerprintRecord(**base)


class TestCollectorConfig:
    def test_onscreen_lengths(self):
        cfg = make_config(
            method=Method.ONSCREEN, point_count=16, iterations_per_point=11,
            subset_mode=False,
        )
        assert cfg.expected_trace_length == 176

    def test_subset_length_is_power_of_two(self):
        cfg = make_config(point_count=10)
        assert cfg.expected_trace_length == 1024

    def test_subset_mode_rejected_onscreen(self):
        with pytest.raises(ConfigError):
            make_config(method=Method.ONSCREEN, subset_mode=True)

    def test_nonpositive_counts_rejected(self):
        with pytest.raises(ConfigError):
            make_config(point_count=0)
        with pytest.raises(ConfigError):
            make_config(iterations_per_point=0, subset_mode=False)

    def test_zero_stall_loop_allowed(self):
        assert make_config(stall_loop_length=0).stall_loop_length == 0


class TestValidateTrace:
    def test_valid_trace_accepted(self):
        assert validate_trace(make_trace()).ok

    def test_short_trace_rejected(self):
        result = validate_trace(make_trace(timings=[1.0] * 1023))
        assert not result.ok
        assert TraceIssue.LENGTH_MISMATCH in result.issues

    def test_nan_rejected(self):
        timings = [1.0] * 1024
        timings[3] = math.nan
        result = validate_trace(make_trace(timings=timings))
        assert not result.ok
        assert TraceIssue.NON_FINITE_TIMING in result.issues

    def test_negative_rejected(self):
        timings = [1.0] * 1024
        timings[9] = -0.5
        result = validate_trace(make_trace(timings=timings))
        assert TraceIssue.NEGATIVE_TIMING in result.issues

    @given(
        length=st.integers(min_value=0, max_value=40),
        bad_value=st.sampled_from([math.nan, math.inf, -math.inf, -1.0, None]),
        bad_index=st.integers(min_value=0, max_value=39),
    )
    @settings(max_examples=120, deadline=None)
    def test_acceptance_matches_invariants(self, length, bad_value, bad_index):
        cfg = make_config(point_count=5, subset_mode=True)  # expects 32
        timings = [1.0] * length
        if bad_value is not None and length > 0:
            timings[bad_index % length] = bad_value
        trace = make_trace(config=cfg, timings=timings)
        expected_ok = (
            len(timings) == 32
            and all(math.isfinite(t) for t in timings)
            and all(t >= 0 for t in timings)
        )
        assert validate_trace(trace).ok == expected_ok


class TestPreprocess:
    def test_frozen_oracle_values(self):
        # Oracle values computed from the definition with the statistics
        # module: population std of 1..1024 is 295.60319687039924.
        trace = make_trace(timings=[float(i) for i in range(1, 1025)])
        m = preprocess(trace).matrix
        assert m.shape == (32, 32)
        assert m[0, 0] == pytest.approx(-1.7303601768023367, abs=1e-12)
        assert m[31, 31] == pytest.approx(1.7303601768023367, abs=1e-12)
        assert m[16, 0] == pytest.approx(0.0016914566733160672, abs=1e-12)

    def test_matches_statistics_module(self):
        rng = np.random.default_rng(7)
        timings = rng.uniform(0.5, 30.0, size=1024)
        mu = statistics.fmean(timings.tolist())
        sd = statistics.pstdev(timings.tolist())
        m = preprocess(make_trace(timings=timings)).matrix
        expected = (timings - mu) / sd
        assert np.allclose(m.reshape(-1), expected, atol=1e-12)

    def test_mean_zero_std_one(self):
        rng = np.random.default_rng(11)
        m = preprocess(make_trace(timings=rng.uniform(1, 5, 1024))).matrix
        assert abs(m.mean()) <= 1e-9
        assert abs(m.std() - 1.0) <= 1e-9

    def test_constant_trace_maps_to_zeros(self):
        m = preprocess(make_trace(timings=[3.25] * 1024)).matrix
        assert np.all(m == 0.0)

    def test_wrong_length_raises(self):
        with pytest.raises(LengthMismatch):
            preprocess(make_trace(timings=[1.0] * 100))

    def test_row_major_reshape(self):
        timings = [float(i) for i in range(1024)]
        m = preprocess(make_trace(timings=timings)).matrix
        # element [r][c] must come from flat index r*32+c
        flat = m.reshape(-1)
        assert flat[33] == m[1, 1]
        assert np.argmax(flat) == 1023 and np.argmax(m) == 1023

    def test_correlation_with_input_is_one(self):
        rng = np.random.default_rng(3)
        timings = rng.uniform(0.1, 9.0, 1024)
        m = preprocess(make_trace(timings=timings)).matrix
        r = np.corrcoef(m.reshape(-1), timings)[0, 1]
        assert r == pytest.approx(1.0, abs=1e-12)

    def test_output_is_read_only(self):
        m = preprocess(make_trace(timings=[float(i) for i in range(1024)])).matrix
        with pytest.raises(ValueError):
            m[0, 0] = 5.0


class TestRecord:
    def test_record_needs_seven_traces(self):
        with pytest.raises(ConfigError):
            make_record(n_traces=6)
        with pytest.raises(ConfigError):
            make_record(n_traces=8)

    def test_record_traces_share_config(self):
        cfg_a = make_config()
        cfg_b = make_config(stall_loop_length=999)
        traces = tuple(make_trace(config=cfg_a) for _ in range(6))
        traces += (make_trace(config=cfg_b),)
        with pytest.raises(ConfigError):
            make_record(traces=traces)


class TestTimestamps:
    def test_whole_second_survives_bit_exact(self):
        text = "2021-02-07T00:00:00Z"
        assert format_timestamp(parse_timestamp(text)) == text

    def test_millisecond_survives_bit_exact(self):
        text = "2021-02-07T12:30:05.250Z"
        assert format_timestamp(parse_timestamp(text)) == text

    def test_non_utc_offset_rejected(self):
        with pytest.raises(SchemaViolation):
            parse_timestamp("2021-02-07T00:00:00+01:00Z")
        with pytest.raises(SchemaViolation):
            parse_timestamp("2021-02-07T00:00:00")

    def test_naive_datetime_treated_as_utc(self):
        trace = make_trace(collected_at=datetime(2021, 2, 7))
        assert trace.collected_at.tzinfo is timezone.utc


class TestSerialization:
    def test_round_trip_equality(self):
        record = make_record()
        assert parse_record(serialize_record(record)) == record

    def test_document_round_trip_bit_exact(self):
        record = make_record()
        doc = serialize_record(record)
        assert serialize_record(parse_record(doc)) == doc

    def test_unknown_top_level_field_rejected(self):
        obj = record_to_dict(make_record())
        obj["extra"] = 1
        with pytest.raises(SchemaViolation):
            parse_record(json.dumps(obj))

    def test_missing_timings_rejected(self):
        obj = record_to_dict(make_record())
        del obj["traces"][0]["timings"]
        with pytest.raises(SchemaViolation):
            parse_record(json.dumps(obj))

    def test_six_traces_rejected(self):
        obj = record_to_dict(make_record())
        obj["traces"] = obj["traces"][:6]
        with pytest.raises(SchemaViolation):
            parse_record(json.dumps(obj))

    def test_not_json_rejected(self):
        with pytest.raises(MalformedDocument):
            parse_record(b"this is not json")
        with pytest.raises(MalformedDocument):
            parse_record(b"[1, 2, 3]")

    def test_unknown_attribute_key_rejected(self):
        obj = record_to_dict(make_record())
        obj["attributes"]["surprise"] = "x"
        with pytest.raises(SchemaViolation):
            parse_record(json.dumps(obj))

    def test_missing_attribute_key_rejected(self):
        obj = record_to_dict(make_record())
        del obj["attributes"]["timezone"]
        with pytest.raises(SchemaViolation):
            parse_record(json.dumps(obj))

    def test_null_true_device_round_trips(self):
        record = make_record(true_device=None)
        assert parse_record(serialize_record(record)).true_device is None


# Random valid records for the round-trip property. Timings are drawn as
# arbitrary finite non-negative floats so float-exact JSON encoding is
# exercised, not just pretty values.
_timing = st.floats(
    min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False
)


@st.composite
def records(draw):
    point_count = draw(st.integers(min_value=1, max_value=4))
    subset = draw(st.booleans())
    method = draw(
        st.sampled_from([Method.OFFSCREEN, Method.GPU_TIMER])
        if subset
        else st.sampled_from(list(Method))
    )
    cfg = CollectorConfig(
        method=method,
        operator=draw(st.sampled_from(list(Operator))),
        point_count=point_count,
        iterations_per_point=draw(st.integers(min_value=1, max_value=3)),
        subset_mode=subset,
        stall_loop_length=draw(st.integers(min_value=0, max_value=10000)),
    )
    n = cfg.expected_trace_length
    collected_at = datetime(
        2021,
        draw(st.integers(1, 12)),
        draw(st.integers(1, 28)),
        draw(st.integers(0, 23)),
        draw(st.integers(0, 59)),
        draw(st.integers(0, 59)),
        draw(st.integers(0, 999)) * 1000,
        tzinfo=UTC,
    )
    client = draw(st.text(alphabet="abcdef0123456789-", min_size=1, max_size=12))
    traces = tuple(
        Trace(
            config=cfg,
            timings=tuple(draw(st.lists(_timing, min_size=n, max_size=n))),
            collected_at=collected_at,
            client_id=client,
            # wire format carries the renderer in the attributes, so a
            # coherent record repeats it here
            method_reported="Test GPU",
        )
        for _ in range(7)
    )
    true_device = draw(st.one_of(st.none(), st.sampled_from(["d0", "d1", "d2"])))
    return FingerprintRecord(
        client_id=client,
        collected_at=collected_at,
        attributes=make_attributes(),
        traces=traces,
        true_device=true_device,
    )


@given(records())
@settings(max_examples=60, deadline=None)
def test_round_trip_property(record):
    again = parse_record(serialize_record(record))
    assert again == record
    assert serialize_record(again) == serialize_record(record)
