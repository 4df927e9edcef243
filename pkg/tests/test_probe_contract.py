"""Browser-probe wire contract, checked against recorded submissions.

The files under frontend/fixtures/ were produced by the probe's own
collection and assembly code running against a scripted machine, so the
suite can hold the two components to one schema without a live browser.
"""

import json
import threading
import urllib.request
from pathlib import Path

import pytest

from euprint.ingest import TraceStore, make_server
from euprint.tracemodel import Method, parse_record, validate_trace

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "frontend" / "fixtures"
NDJSON_FILES = ("onscreen-16x11.ndjson", "offscreen-10pt.ndjson", "gpu-10pt.ndjson")


def load_records(name):
    path = FIXTURE_DIR / name
    if not path.exists():
        pytest.fail(f"missing recorded fixture {path}; run `npm run fixtures` in frontend/")
    return [parse_record(line) for line in path.read_bytes().splitlines()]


@pytest.fixture(scope="module")
def all_records():
    return {name: load_records(name) for name in NDJSON_FILES}


class TestSchema:
    def test_every_record_parses_with_seven_traces(self, all_records):
        for name, records in all_records.items():
            assert records, name
            for record in records:
                assert len(record.traces) == 7
                assert record.true_device is None
                assert len(record.attributes) == 14

    def test_every_trace_validates(self, all_records):
        for records in all_records.values():
            for record in records:
                for trace in record.traces:
                    assert validate_trace(trace).ok

    def test_trace_methods_match_their_files(self, all_records):
        expected = {
            "onscreen-16x11.ndjson": Method.ONSCREEN,
            "offscreen-10pt.ndjson": Method.OFFSCREEN,
            "gpu-10pt.ndjson": Method.GPU_TIMER,
        }
        for name, records in all_records.items():
            for record in records:
                assert {t.config.method for t in record.traces} == {expected[name]}

    def test_client_ids_are_distinct(self, all_records):
        ids = [r.client_id for records in all_records.values() for r in records]
        assert len(ids) == len(set(ids))


class TestTraceShapes:
    def test_onscreen_emits_points_times_iterations(self, all_records):
        (record,) = all_records["onscreen-16x11.ndjson"]
        for trace in record.traces:
            assert trace.config.point_count == 16
            assert trace.config.iterations_per_point == 11
            assert not trace.config.subset_mode
            assert len(trace.timings) == 176

    def test_subset_methods_emit_all_masks(self, all_records):
        for name in ("offscreen-10pt.ndjson", "gpu-10pt.ndjson"):
            for record in all_records[name]:
                for trace in record.traces:
                    assert trace.config.point_count == 10
                    assert trace.config.subset_mode
                    assert len(trace.timings) == 1024

    def test_mask_zero_is_the_subset_minimum(self, all_records):
        # first mask stalls nothing, so it should be the cheapest draw
        traces = [
            t
            for name in ("offscreen-10pt.ndjson", "gpu-10pt.ndjson")
            for record in all_records[name]
            for t in record.traces
        ]
        hits = sum(1 for t in traces if t.timings[0] == min(t.timings))
        assert hits / len(traces) >= 0.95

    def test_firefox_client_reports_doubled_stall_loop(self, all_records):
        chrome, firefox = all_records["offscreen-10pt.ndjson"]
        assert "Firefox" in firefox.attributes["http_user_agent"]
        assert chrome.traces[0].config.stall_loop_length == 1500
        assert firefox.traces[0].config.stall_loop_length == 3000


class TestOnscreenFrameLock:
    def test_deltas_sit_on_refresh_multiples(self, all_records):
        meta = json.loads((FIXTURE_DIR / "onscreen-16x11.meta.json").read_text())
        refresh = meta["refresh_period_ms"]
        (record,) = all_records["onscreen-16x11.ndjson"]
        assert len(refresh) == len(record.traces)
        for trace, period in zip(record.traces, refresh):
            assert 10.0 < period < 25.0
            for timing in trace.timings:
                multiple = max(1, round(timing / period))
                assert abs(timing - multiple * period) <= 2.0


class TestIngestRoundTrip:
    @pytest.fixture
    def server(self, tmp_path):
        instance = make_server(TraceStore(tmp_path), 0)
        thread = threading.Thread(target=instance.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{instance.server_address[1]}"
        instance.shutdown()
        instance.server_close()

    def post(self, base, body, headers=None):
        request = urllib.request.Request(f"{base}/api/v1/traces", data=body,
                                         headers=headers or {})
        with urllib.request.urlopen(request) as response:
            return response.status, json.loads(response.read())

    def test_service_accepts_every_fixture_line(self, server):
        index = 0
        for name in NDJSON_FILES:
            for line in (FIXTURE_DIR / name).read_bytes().splitlines():
                status, payload = self.post(server, line)
                assert status == 200
                assert payload == {"status": "accepted", "index": index}
                index += 1

    def test_probe_retries_deduplicate(self, server):
        line = (FIXTURE_DIR / "gpu-10pt.ndjson").read_bytes().splitlines()[0]
        headers = {"X-Submission-Id": "a3a29c6f-30df-43d3-b75c-6f2fd92b18c1"}
        first = self.post(server, line, headers)
        again = self.post(server, line, headers)
        assert first == again == (200, {"status": "accepted", "index": 0})
