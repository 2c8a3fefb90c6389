"""Byte-exact communication accounting."""

from __future__ import annotations

import enum
import threading
from collections import defaultdict
from dataclasses import dataclass, field

from ..payloads import PAYLOAD_TYPES, Payload, PayloadKind

MB = 10**6


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class LedgerEntry:
    round: int
    client: int
    direction: Direction
    kind: PayloadKind
    elements: int
    bytes: int


_KIND_ORDER = {k: i for i, k in enumerate(PayloadKind)}


class CommLedger:
    """Append-only log of every payload movement.

    Appends may come from concurrent client workers; ``entries`` is always
    returned in (round, client, payload kind, direction) order.
    """

    def __init__(self, wire_bytes: int = 4, method: str = ""):
        if not isinstance(wire_bytes, int) or wire_bytes <= 0:
            raise ValueError(f"wire bytes per element must be a positive integer, got {wire_bytes!r}")
        self.wire_bytes = wire_bytes
        self.method = method
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, round_idx: int, client: int, direction: Direction, payload: Payload) -> LedgerEntry:
        if not isinstance(payload, PAYLOAD_TYPES):
            raise TypeError(f"{type(payload).__name__} is not a permitted payload")
        n = payload.num_elements
        entry = LedgerEntry(round_idx, client, Direction(direction), payload.kind, n, n * self.wire_bytes)
        with self._lock:
            self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            snapshot = list(self._entries)
        snapshot.sort(key=lambda e: (e.round, e.client, _KIND_ORDER[e.kind], e.direction.value))
        return tuple(snapshot)

    def __len__(self) -> int:
        return len(self._entries)

    def cumulative(self, through_round: int) -> tuple[int, int]:
        up = down = 0
        for e in self.entries:
            if e.round > through_round:
                continue
            if e.direction is Direction.UP:
                up += e.bytes
            else:
                down += e.bytes
        return up, down


@dataclass
class LedgerTotals:
    by_key: dict[tuple[str, str, str], int] = field(default_factory=dict)
    up: int = 0
    down: int = 0

    @property
    def total(self) -> int:
        return self.up + self.down

    @property
    def megabytes(self) -> float:
        return self.total / MB

    def by_kind(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for (_, kind, _), b in self.by_key.items():
            out[kind] += b
        return dict(out)

    def to_dict(self) -> dict:
        return {
            "up_bytes": self.up,
            "down_bytes": self.down,
            "total_bytes": self.total,
            "total_mb": self.megabytes,
            "by_payload": [
                {"method": m, "kind": k, "direction": d, "bytes": b} for (m, k, d), b in sorted(self.by_key.items())
            ],
        }


def ledger_totals(ledger: CommLedger, through_round: int | None = None) -> LedgerTotals:
    """Exact byte sums keyed by (method, payload kind, direction)."""
    totals = LedgerTotals()
    for e in ledger.entries:
        if through_round is not None and e.round > through_round:
            continue
        key = (ledger.method, e.kind.value, e.direction.value)
        totals.by_key[key] = totals.by_key.get(key, 0) + e.bytes
        if e.direction is Direction.UP:
            totals.up += e.bytes
        else:
            totals.down += e.bytes
    return totals
