"""Submission intake: validated append-only NDJSON store plus the HTTP front.

Store files rotate daily and hold one wrapped record per line, so a crash
can corrupt at most the line being written; everything before it stays
parseable.  The server keeps no raw network addresses, only salted hashes.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .tracemodel import (
    FingerprintRecord,
    SchemaViolation,
    format_timestamp,
    parse_record,
    parse_timestamp,
    serialize_record,
)

MAX_BODY_BYTES = 1 << 20
DEFAULT_STORE_DIR = "./euprint-store"
STORE_ENV_VAR = "EUPRINT_STORE_DIR"


class OversizedSubmission(ValueError):
    """Request bodies beyond 1 MiB are refused before parsing."""


def resolve_store_dir(flag_value: str | None) -> Path:
    """--store beats EUPRINT_STORE_DIR beats the local default."""
    if flag_value:
        return Path(flag_value)
    env = os.environ.get(STORE_ENV_VAR)
    if env:
        return Path(env)
    return Path(DEFAULT_STORE_DIR)


@dataclass
class StoredRecord:
    index: int
    server_received_at: datetime
    source_hash: str
    submission_id: str | None
    record: FingerprintRecord


def _wrap_line(stored: StoredRecord) -> bytes:
    envelope = {
        "index": stored.index,
        "server_received_at": format_timestamp(stored.server_received_at),
        "source_hash": stored.source_hash,
        "submission_id": stored.submission_id,
        "record": json.loads(serialize_record(stored.record)),
    }
    return json.dumps(envelope, separators=(",", ":"), sort_keys=True).encode("utf-8")


def _unwrap_line(line: bytes) -> StoredRecord:
    envelope = json.loads(line.decode("utf-8"))
    return StoredRecord(
        index=int(envelope["index"]),
        server_received_at=parse_timestamp(envelope["server_received_at"]),
        source_hash=str(envelope["source_hash"]),
        submission_id=envelope.get("submission_id"),
        record=parse_record(
            json.dumps(envelope["record"], separators=(",", ":")).encode("utf-8")),
    )


class TraceStore:
    """Append-only daily-rotated NDJSON store with a single serialized writer."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._salt = self._load_salt()
        self._next_index = 0
        self._last_received: datetime | None = None
        self._submission_index: dict[str, int] = {}
        self._rescan()

    def _load_salt(self) -> bytes:
        path = self.directory / "salt"
        if path.exists():
            return bytes.fromhex(path.read_text().strip())
        salt = secrets.token_bytes(16)
        path.write_text(salt.hex())
        return salt

    def hash_source(self, source: str) -> str:
        return hashlib.sha256(self._salt + source.encode("utf-8")).hexdigest()[:32]

    def store_files(self) -> list[Path]:
        return sorted(self.directory.glob("traces-*.ndjson"))

    def _rescan(self) -> None:
        count = 0
        for path in self.store_files():
            for _, stored in _scan_lines(path):
                if stored is None:
                    continue
                count = max(count, stored.index + 1)
                if stored.submission_id:
                    self._submission_index[stored.submission_id] = stored.index
                self._last_received = stored.server_received_at
        self._next_index = count

    def _active_file(self, when: datetime) -> Path:
        return self.directory / f"traces-{when:%Y%m%d}.ndjson"

    def ingest(self, body: bytes, *, source: str = "",
               submission_id: str | None = None) -> int:
        """Validate one submission and append it; returns the record index.

        A repeated submission_id returns the original index without writing.
        """
        if len(body) > MAX_BODY_BYTES:
            raise OversizedSubmission(f"{len(body)} bytes exceeds {MAX_BODY_BYTES}")
        record = parse_record(body)
        with self._lock:
            if submission_id and submission_id in self._submission_index:
                return self._submission_index[submission_id]
            now = datetime.now(timezone.utc).replace(microsecond=0)
            # keep per-file server timestamps monotone even if the clock steps back
            if self._last_received is not None and now < self._last_received:
                now = self._last_received
            stored = StoredRecord(
                index=self._next_index,
                server_received_at=now,
                source_hash=self.hash_source(source),
                submission_id=submission_id,
                record=record,
            )
            with open(self._active_file(now), "ab") as fh:
                fh.write(_wrap_line(stored) + b"\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._next_index += 1
            self._last_received = now
            if submission_id:
                self._submission_index[submission_id] = stored.index
            return stored.index

    def purge(self, client_id: str) -> int:
        """Drop every record of one client; files are rewritten atomically.

        Lines that no longer parse are preserved verbatim: their client
        cannot be determined, so deleting them would overreach.
        """
        removed = 0
        with self._lock:
            for path in self.store_files():
                kept_lines = []
                for raw, stored in _scan_lines(path):
                    if stored is not None and stored.record.client_id == client_id:
                        removed += 1
                        self._submission_index.pop(stored.submission_id or "", None)
                    else:
                        kept_lines.append(raw)
                tmp = path.with_suffix(".tmp")
                with open(tmp, "wb") as fh:
                    for line in kept_lines:
                        fh.write(line + b"\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
        return removed


def _scan_lines(path: Path) -> list[tuple[bytes, StoredRecord | None]]:
    """(raw line, parsed record or None) for every line worth keeping.

    A file ending without a newline had its tail cut mid-write; that tail
    is kept only if it still parses.  Corrupt interior lines come back as
    None so callers decide whether to count, skip, or preserve them.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        return []
    lines = data.split(b"\n")
    truncated_tail = lines[-1] != b""
    body = [line for line in lines[:-1] if line]
    out: list[tuple[bytes, StoredRecord | None]] = []
    for line in body:
        try:
            out.append((line, _unwrap_line(line)))
        except (ValueError, SchemaViolation, KeyError):
            out.append((line, None))
    if truncated_tail:
        try:
            out.append((lines[-1], _unwrap_line(lines[-1])))
        except (ValueError, SchemaViolation, KeyError):
            pass
    return out


def scan_store(directory: str | Path):
    """All parseable StoredRecords plus a count of skipped corrupt lines."""
    skipped = 0
    records: list[StoredRecord] = []
    for path in sorted(Path(directory).glob("traces-*.ndjson")):
        for _, stored in _scan_lines(path):
            if stored is None:
                skipped += 1
            else:
                records.append(stored)
    return records, skipped


def export_corpus(directory: str | Path, *,
                  since: datetime | None = None,
                  until: datetime | None = None,
                  clients=None) -> tuple[list[FingerprintRecord], int]:
    """Filtered, time-sorted records ready for the analysis pipeline."""
    stored, skipped = scan_store(directory)
    wanted = set(clients) if clients else None
    records = []
    for item in stored:
        when = item.record.collected_at
        if since is not None and when < since:
            continue
        if until is not None and when >= until:
            continue
        if wanted is not None and item.record.client_id not in wanted:
            continue
        records.append(item.record)
    records.sort(key=lambda r: (r.collected_at, r.client_id))
    return records, skipped


# --- HTTP front ---

def _make_handler(store: TraceStore):
    class Handler(BaseHTTPRequestHandler):
        server_version = "euprint/1"

        def _reply(self, code: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self) -> None:  # CORS preflight for browser probes
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "POST, GET, OPTIONS")
            self.send_header("Access-Control-Allow-Headers",
                             "Content-Type, X-Submission-Id")
            self.end_headers()

        def do_GET(self) -> None:
            if self.path == "/api/v1/health":
                self._reply(200, {"status": "ok"})
            else:
                self._reply(404, {"status": "unknown path"})

        def _drain(self, length: int) -> None:
            # let the client finish writing before the rejection goes out,
            # else they see EPIPE instead of the 413; cap foils liars
            left = min(length, 8 * MAX_BODY_BYTES)
            if left < length:
                self.close_connection = True
            while left > 0:
                chunk = self.rfile.read(min(left, 1 << 16))
                if not chunk:
                    break
                left -= len(chunk)

        def do_POST(self) -> None:
            if self.path != "/api/v1/traces":
                self._reply(404, {"status": "unknown path"})
                return
            length = int(self.headers.get("Content-Length", "0"))
            if length > MAX_BODY_BYTES:
                self._drain(length)
                self._reply(413, {"status": "rejected", "error": "body too large"})
                return
            body = self.rfile.read(length)
            submission_id = self.headers.get("X-Submission-Id")
            try:
                index = store.ingest(body, source=self.client_address[0],
                                     submission_id=submission_id)
            except OversizedSubmission as exc:
                self._reply(413, {"status": "rejected", "error": str(exc)})
            except (SchemaViolation, ValueError) as exc:
                self._reply(400, {"status": "rejected", "error": str(exc)})
            except OSError as exc:
                self._reply(500, {"status": "error", "error": str(exc)})
            else:
                self._reply(200, {"status": "accepted", "index": index})

        def log_message(self, *args) -> None:  # keep test output clean
            pass

    return Handler


def make_server(store: TraceStore, port: int,
                host: str = "127.0.0.1") -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), _make_handler(store))


def serve(store_dir: str | Path, port: int, host: str = "127.0.0.1") -> None:
    server = make_server(TraceStore(store_dir), port, host)
    try:
        server.serve_forever()
    finally:
        server.server_close()
