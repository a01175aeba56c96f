"""Item catalog, session containers, CSV ingestion and session-level splits.

Sessions are ordered lists of item views over a dense integer catalog
(ids 0..P-1).  The on-disk format is a CSV with rows
``session_id, order_key, item_id`` where ``order_key`` is any totally
ordered integer (timestamp or index); a header row is auto-detected.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SessionDataError


@dataclass
class ItemCatalog:
    """Dense integer item catalog; ids run 0..num_items-1."""

    num_items: int
    labels: list[str] | None = None

    def __post_init__(self):
        if self.num_items < 1:
            raise ValueError(f"catalog needs at least one item, got {self.num_items}")
        if self.labels is not None and len(self.labels) != self.num_items:
            raise ValueError(
                f"{len(self.labels)} labels for {self.num_items} items"
            )

    def label(self, item: int) -> str:
        if self.labels is None:
            return str(item)
        return self.labels[item]


@dataclass
class Session:
    """One user's ordered item views."""

    session_id: str
    views: list[int]

    def __len__(self):
        return len(self.views)


@dataclass
class SessionSet:
    """A collection of sessions sharing one catalog."""

    sessions: list[Session]
    catalog: ItemCatalog

    def __post_init__(self):
        seen = set()
        for s in self.sessions:
            if s.session_id in seen:
                raise SessionDataError(f"duplicate session id {s.session_id!r}")
            seen.add(s.session_id)
            for v in s.views:
                if not 0 <= v < self.catalog.num_items:
                    raise SessionDataError(
                        f"session {s.session_id!r}: item {v} outside catalog "
                        f"of {self.catalog.num_items} items"
                    )

    def __len__(self):
        return len(self.sessions)

    def __iter__(self):
        return iter(self.sessions)

    @property
    def num_items(self) -> int:
        return self.catalog.num_items

    def total_views(self) -> int:
        return sum(len(s) for s in self.sessions)


def to_counts(session: Session, num_items: int) -> np.ndarray:
    """Per-item view counts of a session; empty sessions give all zeros."""
    views = np.asarray(session.views, dtype=np.int64)
    if views.size and (views.min() < 0 or views.max() >= num_items):
        raise SessionDataError(
            f"session {session.session_id!r}: view outside catalog of {num_items} items"
        )
    return np.bincount(views, minlength=num_items)


def pooled_counts(data: SessionSet) -> np.ndarray:
    """Total view counts over all sessions."""
    total = np.zeros(data.num_items, dtype=np.int64)
    for s in data:
        total += to_counts(s, data.num_items)
    return total


def _parse_int(text: str, what: str, line_no: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise SessionDataError(f"line {line_no}: bad {what} {text!r}") from None


def load_sessions(path, num_items: int | None = None) -> SessionSet:
    """Read a session CSV.

    Rows are ``session_id, order_key, item_id``; views are returned sorted by
    order_key ascending (ties keep file order).  The catalog size is inferred
    as max item id + 1 unless `num_items` is given, which also enables
    bounds checking against a larger known catalog.
    """
    groups: dict[str, list[tuple[int, int]]] = {}
    max_item = -1
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise SessionDataError(
                    f"line {line_no}: expected 3 fields, got {len(row)}"
                )
            sid, key_text, item_text = (f.strip() for f in row)
            if line_no == 1 and not (_is_int(key_text) and _is_int(item_text)):
                continue  # header row
            key = _parse_int(key_text, "order_key", line_no)
            item = _parse_int(item_text, "item_id", line_no)
            if item < 0:
                raise SessionDataError(f"line {line_no}: negative item id {item}")
            if num_items is not None and item >= num_items:
                raise SessionDataError(
                    f"line {line_no}: item {item} outside catalog of {num_items} items"
                )
            max_item = max(max_item, item)
            groups.setdefault(sid, []).append((key, item))

    if num_items is None:
        if max_item < 0:
            raise SessionDataError(
                f"{path}: no rows and no explicit catalog size given"
            )
        num_items = max_item + 1

    sessions = []
    for sid, pairs in groups.items():
        pairs.sort(key=lambda kv: kv[0])
        sessions.append(Session(sid, [item for _, item in pairs]))
    return SessionSet(sessions, ItemCatalog(num_items))


def _is_int(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def write_sessions(data: SessionSet, path) -> None:
    """Write the session CSV; order keys are re-issued as 1..T per session."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "order_key", "item_id"])
        for s in data:
            for t, v in enumerate(s.views, start=1):
                writer.writerow([s.session_id, t, v])


def read_labels(path) -> list[str]:
    """Catalog label file: one label per line, line i names item i."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def split_by_session(
    data: SessionSet, test_fraction: float, seed: int
) -> tuple[SessionSet, SessionSet]:
    """Disjoint train/test partition; no session straddles the split.

    The test side gets round(test_fraction * n) sessions, clamped so both
    sides stay non-empty.  Deterministic given seed.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(data)
    if n < 2:
        raise ValueError(f"need at least 2 sessions to split, got {n}")
    n_test = int(round(test_fraction * n))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = [s for i, s in enumerate(data.sessions) if i not in test_idx]
    test = [s for i, s in enumerate(data.sessions) if i in test_idx]
    return SessionSet(train, data.catalog), SessionSet(test, data.catalog)
