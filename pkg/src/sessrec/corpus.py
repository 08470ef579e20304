"""Event-log ingestion: filtering, temporal splitting, indexing, serialization.

The on-disk corpus format (version 1, all integers little-endian):

    magic   4 bytes  b"SBRC"
    u32     format version
    u32     n_items
    u32     number of train sessions
    u32     number of test sessions
    vocab   n_items entries, in index order: u32 byte length + UTF-8 raw item id
    train   per session: u32 id length + UTF-8 original id, u32 m, m * u32 item indices
    test    same layout

Sessions are stored in chronological order (by last event timestamp), so the
file is bit-exact across platforms for identical inputs.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

MAGIC = b"SBRC"
FORMAT_VERSION = 1


class CorpusError(ValueError):
    """Unreadable input, malformed record, or degenerate (empty) corpus."""


@dataclass(frozen=True)
class RawEvent:
    session_id: str
    item_id: str
    timestamp: int


@dataclass(frozen=True)
class LogFormat:
    """Column layout of a delimiter-separated event log."""

    delimiter: str = "\t"
    session_col: int = 0
    item_col: int = 1
    time_col: int = 2
    header_lines: int = 0


@dataclass
class RawSession:
    """A session before item reindexing; items are raw ids, time-ordered."""

    original_id: str
    items: list[str]
    last_ts: int


@dataclass
class Session:
    """A session after reindexing; items are 0-based vocabulary indices."""

    items: list[int]
    original_id: str


@dataclass
class SessionCorpus:
    train_sessions: list[Session]
    test_sessions: list[Session]
    n_items: int
    item_to_index: dict[str, int]
    index_to_item: list[str]
    train_samples: list[tuple[list[int], int]] = field(default_factory=list)
    test_samples: list[tuple[list[int], int]] = field(default_factory=list)

    def rebuild_samples(self) -> None:
        self.train_samples = split_all(self.train_sessions)
        self.test_samples = split_all(self.test_sessions)


def load_events(path: str | Path, fmt: LogFormat = LogFormat()) -> list[RawEvent]:
    """Parse a delimiter-separated event log into RawEvents, in file order."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"cannot read event log {path}: {e}") from e
    events: list[RawEvent] = []
    needed = max(fmt.session_col, fmt.item_col, fmt.time_col) + 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if lineno <= fmt.header_lines:
            continue
        if not line.strip():
            continue
        parts = line.split(fmt.delimiter)
        if len(parts) < needed:
            raise CorpusError(
                f"{path}: line {lineno}: expected at least {needed} columns, got {len(parts)}"
            )
        raw_ts = parts[fmt.time_col].strip()
        try:
            ts = int(raw_ts)
        except ValueError:
            raise CorpusError(
                f"{path}: line {lineno}: malformed timestamp {raw_ts!r}"
            ) from None
        if ts < 0:
            raise CorpusError(f"{path}: line {lineno}: negative timestamp {ts}")
        session_id = parts[fmt.session_col].strip()
        item_id = parts[fmt.item_col].strip()
        if not session_id or not item_id:
            raise CorpusError(f"{path}: line {lineno}: empty session or item id")
        events.append(RawEvent(session_id, item_id, ts))
    if not events:
        raise CorpusError(f"{path}: no events parsed (empty input)")
    return events


def build_sessions(events: list[RawEvent]) -> list[RawSession]:
    """Group events by session id and order each session by timestamp.

    Ties in timestamp keep input order; sessions appear in order of their
    first event in the input.
    """
    grouped: dict[str, list[RawEvent]] = {}
    for ev in events:
        grouped.setdefault(ev.session_id, []).append(ev)
    sessions = []
    for sid, evs in grouped.items():
        ordered = sorted(evs, key=lambda e: e.timestamp)  # stable: ties keep input order
        sessions.append(
            RawSession(sid, [e.item_id for e in ordered], ordered[-1].timestamp)
        )
    return sessions


def filter_corpus(
    sessions: list[RawSession], min_session_len: int = 2, min_item_freq: int = 5
) -> list[RawSession]:
    """Drop rare items and short sessions, iterating to a fixed point.

    Removing a rare item can shorten a session below the minimum, and
    removing a session can push an item below the frequency threshold, so
    both filters re-run until neither changes anything.
    """
    current = sessions
    while True:
        counts = Counter(item for s in current for item in s.items)
        kept: list[RawSession] = []
        changed = False
        for s in current:
            items = [i for i in s.items if counts[i] >= min_item_freq]
            if len(items) != len(s.items):
                changed = True
            if len(items) >= min_session_len:
                kept.append(RawSession(s.original_id, items, s.last_ts))
            else:
                changed = True
        current = kept
        if not changed:
            break
    if not current:
        raise CorpusError(
            "empty corpus: filtering removed every session "
            f"(min_session_len={min_session_len}, min_item_freq={min_item_freq})"
        )
    return current


def temporal_split(
    sessions: list[RawSession],
    test_fraction: float | None = None,
    boundary_ts: int | None = None,
) -> tuple[list[RawSession], list[RawSession]]:
    """Split sessions into train/test by their last event's timestamp.

    Sessions at or after the boundary go to test. With ``test_fraction``,
    the boundary is the timestamp of the session that leaves floor(f*n)
    sessions at or after it (ties at the boundary all go to test). Items
    unseen in train are dropped from test sessions; test sessions shrinking
    below length 2 are discarded.
    """
    if (test_fraction is None) == (boundary_ts is None):
        raise CorpusError("specify exactly one of test_fraction or boundary_ts")
    if not sessions:
        raise CorpusError("empty corpus: no sessions to split")
    ordered = sorted(sessions, key=lambda s: s.last_ts)  # stable
    if test_fraction is not None:
        if not 0.0 < test_fraction < 1.0:
            raise CorpusError(f"test_fraction must be in (0, 1), got {test_fraction}")
        n_test = int(len(ordered) * test_fraction)
        if n_test == 0:
            raise CorpusError("empty test split: test_fraction selects no sessions")
        boundary_ts = ordered[len(ordered) - n_test].last_ts
    train = [s for s in ordered if s.last_ts < boundary_ts]
    test = [s for s in ordered if s.last_ts >= boundary_ts]
    if not train:
        raise CorpusError("empty train split: boundary precedes all sessions")
    if not test:
        raise CorpusError("empty test split: boundary is after all sessions")
    known = {item for s in train for item in s.items}
    cleaned = []
    for s in test:
        items = [i for i in s.items if i in known]
        if len(items) >= 2:
            cleaned.append(RawSession(s.original_id, items, s.last_ts))
    if not cleaned:
        raise CorpusError("empty test split: no test session survives vocabulary pruning")
    return train, cleaned


def index_corpus(
    train: list[RawSession], test: list[RawSession]
) -> SessionCorpus:
    """Assign 0-based item indices by first appearance in the train split."""
    item_to_index: dict[str, int] = {}
    for s in train:
        for item in s.items:
            if item not in item_to_index:
                item_to_index[item] = len(item_to_index)
    index_to_item = [""] * len(item_to_index)
    for raw, idx in item_to_index.items():
        index_to_item[idx] = raw

    def reindex(sessions: list[RawSession]) -> list[Session]:
        return [
            Session([item_to_index[i] for i in s.items], s.original_id)
            for s in sessions
        ]

    corpus = SessionCorpus(
        train_sessions=reindex(train),
        test_sessions=reindex(test),
        n_items=len(item_to_index),
        item_to_index=item_to_index,
        index_to_item=index_to_item,
    )
    corpus.rebuild_samples()
    return corpus


def sequence_split(items: list[int]) -> list[tuple[list[int], int]]:
    """Expand one session into (prefix, label) samples, one per position.

    [a, b, c, d] -> ([a], b), ([a, b], c), ([a, b, c], d).
    """
    if len(items) < 2:
        raise CorpusError(f"cannot split session of length {len(items)} (need >= 2)")
    return [(list(items[:t]), items[t]) for t in range(1, len(items))]


def split_all(sessions: list[Session]) -> list[tuple[list[int], int]]:
    samples: list[tuple[list[int], int]] = []
    for s in sessions:
        samples.extend(sequence_split(s.items))
    return samples


def build_corpus(
    events: list[RawEvent],
    min_session_len: int = 2,
    min_item_freq: int = 5,
    test_fraction: float | None = None,
    boundary_ts: int | None = None,
) -> SessionCorpus:
    """Full pipeline: group, filter, split, and index an event list."""
    sessions = build_sessions(events)
    sessions = filter_corpus(sessions, min_session_len, min_item_freq)
    train, test = temporal_split(sessions, test_fraction, boundary_ts)
    return index_corpus(train, test)


def summarize(corpus: SessionCorpus) -> dict[str, float | int]:
    train_lens = [len(s.items) for s in corpus.train_sessions]
    test_lens = [len(s.items) for s in corpus.test_sessions]
    all_lens = train_lens + test_lens
    return {
        "n_items": corpus.n_items,
        "train_sessions": len(corpus.train_sessions),
        "test_sessions": len(corpus.test_sessions),
        "train_samples": len(corpus.train_samples),
        "test_samples": len(corpus.test_samples),
        "avg_session_len": sum(all_lens) / len(all_lens) if all_lens else 0.0,
    }


def _pack_str(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack("<I", len(data)) + data


def save_corpus(corpus: SessionCorpus, path: str | Path) -> None:
    """Write the corpus in the versioned binary layout described above."""
    out = bytearray()
    out += MAGIC
    out += struct.pack(
        "<IIII",
        FORMAT_VERSION,
        corpus.n_items,
        len(corpus.train_sessions),
        len(corpus.test_sessions),
    )
    for raw in corpus.index_to_item:
        out += _pack_str(raw)
    for s in corpus.train_sessions + corpus.test_sessions:
        out += _pack_str(s.original_id)
        out += struct.pack("<I", len(s.items))
        out += struct.pack(f"<{len(s.items)}I", *s.items)
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes, origin: str):
        self.data = data
        self.pos = 0
        self.origin = origin

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorpusError(f"{self.origin}: truncated corpus file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_corpus(path: str | Path) -> SessionCorpus:
    """Read a corpus file, validating magic, version, and index bounds."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CorpusError(f"cannot read corpus file {path}: {e}") from e
    r = _Reader(data, str(path))
    if r.take(4) != MAGIC:
        raise CorpusError(f"{path}: not a corpus file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CorpusError(f"{path}: unsupported corpus format version {version}")
    n_items = r.u32()
    n_train = r.u32()
    n_test = r.u32()
    index_to_item = [r.string() for _ in range(n_items)]

    def read_sessions(count: int) -> list[Session]:
        sessions = []
        for _ in range(count):
            sid = r.string()
            m = r.u32()
            items = list(struct.unpack(f"<{m}I", r.take(4 * m)))
            for i in items:
                if i >= n_items:
                    raise CorpusError(f"{path}: item index {i} out of range (N={n_items})")
            sessions.append(Session(items, sid))
        return sessions

    train = read_sessions(n_train)
    test = read_sessions(n_test)
    if r.pos != len(data):
        raise CorpusError(f"{path}: {len(data) - r.pos} trailing bytes")
    corpus = SessionCorpus(
        train_sessions=train,
        test_sessions=test,
        n_items=n_items,
        item_to_index={raw: i for i, raw in enumerate(index_to_item)},
        index_to_item=index_to_item,
    )
    corpus.rebuild_samples()
    return corpus
