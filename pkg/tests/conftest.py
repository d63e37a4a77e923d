"""Shared test fixtures and record factories."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

from openevent.ingest import MessageRecord

T0 = datetime(2012, 10, 11, 0, 0, tzinfo=timezone.utc)


def mk_record(
    idx: int,
    *,
    hours: float = 0.0,
    tokens: tuple[str, ...] = ("hello", "world"),
    author: str = "u0",
    mentions: tuple[str, ...] = (),
    hashtags: tuple[str, ...] = (),
    entities: tuple[str, ...] = (),
    event_id: int | None = None,
) -> MessageRecord:
    return MessageRecord(
        id=f"m{idx}",
        tokens=tokens,
        author=author,
        mentioned_users=mentions,
        hashtags=hashtags,
        entities=entities,
        timestamp=T0 + timedelta(hours=hours),
        event_id=event_id,
    )
