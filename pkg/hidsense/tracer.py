# Copyright 2025 The hidsense Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Bus capture log: recording, a line-oriented text format with hex and ASCII
columns, its parser, and traffic statistics.

Line format::

    T=<us> <KIND> EP=<n|-> LEN=<n>[ DATA=<HEX PAIRS> ASCII=|<chars>|][ NOTE=<text>]
"""

import logging
import re
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError

from hidsense.bus import UNRESPONSIVE, BusPacket, PacketKind
from hidsense.utils.errors import BusStateError, TraceFormatError
from hidsense.utils.files import ensure_parent_dir

logger = logging.getLogger(__name__)

HEADER = "START OF LOG"
HIDDEN_KINDS = frozenset({PacketKind.NAK, PacketKind.SERVICE})

_LINE_RE = re.compile(r"T=(\d+) ([A-Z_]+) EP=(\d+|-) LEN=(\d+)")
_HEX_DIGITS = frozenset("0123456789ABCDEF")


class TraceLog:
    """Append-only packet log; timestamps never go backwards."""

    def __init__(self, packets: list[BusPacket] | None = None) -> None:
        self.packets: list[BusPacket] = []
        for packet in packets or []:
            self.record(packet)

    def record(self, p: BusPacket) -> None:
        if self.packets and p.timestamp < self.packets[-1].timestamp:
            raise BusStateError(
                "Timestamp regression in trace",
                {"timestamp": p.timestamp, "last": self.packets[-1].timestamp},
            )
        self.packets.append(p)

    def __len__(self) -> int:
        return len(self.packets)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TraceLog) and self.packets == other.packets


def ascii_column(payload: bytes) -> str:
    return "".join(chr(b) if 0x20 <= b <= 0x7E else "." for b in payload)


def format_packet(p: BusPacket) -> str:
    endpoint = "-" if p.endpoint is None else str(p.endpoint)
    line = f"T={p.timestamp} {p.kind.value} EP={endpoint} LEN={len(p.payload)}"
    if p.payload:
        line += f" DATA={p.payload.hex(' ').upper()} ASCII=|{ascii_column(p.payload)}|"
    if p.annotation:
        line += f" NOTE={p.annotation}"
    return line


def render(log: TraceLog, verbose: bool = False) -> str:
    """Render the log, hiding NAK and SERVICE lines unless `verbose`."""
    lines = [HEADER]
    lines += [
        format_packet(p) for p in log.packets if verbose or p.kind not in HIDDEN_KINDS
    ]
    return "\n".join(lines) + "\n"


def parse_packet(line: str, lineno: int = 1) -> BusPacket:
    """Inverse of `format_packet`.

    Raises:
        TraceFormatError: With the line number and, where known, the column
    """
    match = _LINE_RE.match(line)
    if match is None:
        raise TraceFormatError("Malformed packet line", line=lineno, column=1)
    timestamp, kind_text, endpoint_text, length_text = match.groups()
    try:
        kind = PacketKind(kind_text)
    except ValueError as e:
        raise TraceFormatError(f"Unknown packet kind {kind_text!r}", line=lineno, column=match.start(2) + 1) from e
    length = int(length_text)
    pos = match.end()
    payload = b""
    if length:
        prefix = " DATA="
        if not line.startswith(prefix, pos):
            raise TraceFormatError("Expected DATA field", line=lineno, column=pos + 1)
        pos += len(prefix)
        hex_text = line[pos : pos + 3 * length - 1]
        for i, ch in enumerate(hex_text):
            expected_space = i % 3 == 2
            if (expected_space and ch != " ") or (not expected_space and ch not in _HEX_DIGITS):
                raise TraceFormatError(f"Bad hex digit {ch!r}", line=lineno, column=pos + i + 1)
        if len(hex_text) != 3 * length - 1:
            raise TraceFormatError("DATA shorter than LEN", line=lineno, column=pos + len(hex_text) + 1)
        payload = bytes.fromhex(hex_text)
        pos += len(hex_text)

        prefix = " ASCII=|"
        if not line.startswith(prefix, pos):
            raise TraceFormatError("Expected ASCII field", line=lineno, column=pos + 1)
        pos += len(prefix)
        chars = line[pos : pos + length]
        if chars != ascii_column(payload):
            raise TraceFormatError("ASCII column does not match DATA", line=lineno, column=pos + 1)
        pos += length
        if not line.startswith("|", pos):
            raise TraceFormatError("Unterminated ASCII field", line=lineno, column=pos + 1)
        pos += 1

    annotation = ""
    rest = line[pos:]
    if rest:
        if not rest.startswith(" NOTE="):
            raise TraceFormatError("Unexpected trailing text", line=lineno, column=pos + 1)
        annotation = rest[len(" NOTE=") :]
    try:
        return BusPacket(
            timestamp=int(timestamp),
            kind=kind,
            endpoint=None if endpoint_text == "-" else int(endpoint_text),
            payload=payload,
            annotation=annotation,
        )
    except ValidationError as e:
        raise TraceFormatError(f"Invalid packet: {e.errors()[0]['msg']}", line=lineno) from e


def parse(text: str) -> TraceLog:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise TraceFormatError(f"Missing {HEADER!r} header", line=1, column=1)
    log = TraceLog()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        packet = parse_packet(line, lineno)
        if log.packets and packet.timestamp < log.packets[-1].timestamp:
            raise TraceFormatError("Timestamp goes backwards", line=lineno, column=1)
        log.record(packet)
    return log


def write_trace(path: str | Path, log: TraceLog) -> Path:
    """Write the complete (verbose) rendering of `log` to `path`."""
    target = ensure_parent_dir(path)
    target.write_text(render(log, verbose=True), encoding="utf-8")
    logger.info(f"Wrote {len(log)} packets to {target}")
    return target


def read_trace(path: str | Path) -> TraceLog:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise TraceFormatError(f"Cannot read trace {path}: {e}", line=0) from e
    return parse(text)


class TraceSummary(BaseModel):
    counts: dict[str, int]
    reports: int
    polls: int
    duration_us: int
    cadence_mean_ms: float | None = None
    cadence_min_ms: float | None = None
    cadence_max_ms: float | None = None
    service_rate_hz: float | None = None
    max_service_gap_us: int | None = None
    nak_ratio: float | None = None
    trip_time_us: int | None = None
    nak_ratio_after_trip: float | None = None
    overwritten_reports: int = 0


def _attached_us(packets: list[BusPacket]) -> int:
    total = 0
    since: int | None = None
    for p in packets:
        if p.kind is PacketKind.ATTACH:
            since = p.timestamp
        elif p.kind is PacketKind.DETACH and since is not None:
            total += p.timestamp - since
            since = None
    if since is not None and packets:
        total += packets[-1].timestamp - since
    return total


def summarize(log: TraceLog) -> TraceSummary:
    """Packet counts, report cadence, keep-alive rate and NAK statistics.

    Reports are DATA_IN packets on non-control endpoints; polls are those plus
    the NAKs answering them.
    """
    packets = log.packets
    counts = {kind.value: 0 for kind in PacketKind}
    for p in packets:
        counts[p.kind.value] += 1

    reports = [p for p in packets if p.kind is PacketKind.DATA_IN and p.endpoint]
    naks = [p for p in packets if p.kind is PacketKind.NAK]
    polls = len(reports) + len(naks)
    summary = TraceSummary(
        counts=counts,
        reports=len(reports),
        polls=polls,
        duration_us=packets[-1].timestamp - packets[0].timestamp if packets else 0,
        overwritten_reports=sum(1 for p in reports if p.annotation.startswith("overwrote")),
    )
    if polls:
        summary.nak_ratio = len(naks) / polls

    if len(reports) > 1:
        gaps_ms = np.diff(np.array([p.timestamp for p in reports], dtype=np.int64)) / 1000.0
        summary.cadence_mean_ms = float(gaps_ms.mean())
        summary.cadence_min_ms = float(gaps_ms.min())
        summary.cadence_max_ms = float(gaps_ms.max())

    services = np.array([p.timestamp for p in packets if p.kind is PacketKind.SERVICE], dtype=np.int64)
    attached = _attached_us(packets)
    if attached > 0:
        summary.service_rate_hz = len(services) / (attached / 1_000_000)
    if len(services) > 1:
        summary.max_service_gap_us = int(np.diff(services).max())

    trip = next((p for p in naks if p.annotation == UNRESPONSIVE), None)
    if trip is not None:
        summary.trip_time_us = trip.timestamp
        after = [p for p in (*reports, *naks) if p.timestamp >= trip.timestamp]
        summary.nak_ratio_after_trip = sum(1 for p in after if p.kind is PacketKind.NAK) / len(after)
    return summary
