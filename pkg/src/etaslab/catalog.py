"""Earthquake catalogue data model, CSV ingestion, and splitting utilities.

A catalogue is an immutable, time-sorted list of ``(time, magnitude)`` events
together with its observation window ``[t1, t2]`` and completeness magnitude
``m0``. Times are in days since the catalogue epoch.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CatalogParseError,
    InsufficientDataError,
    InvalidWindowError,
)

CSV_HEADER = ("time", "magnitude")


@dataclass(frozen=True)
class Event:
    """A single earthquake: occurrence time (days) and moment magnitude."""

    time: float
    magnitude: float

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ValueError(f"event time must be finite and >= 0, got {self.time}")
        if not math.isfinite(self.magnitude):
            raise ValueError(f"event magnitude must be finite, got {self.magnitude}")


def _sort_key(item):
    # stable order: time ascending, magnitude descending, then input order
    index, event = item
    return (event.time, -event.magnitude, index)


@dataclass(frozen=True)
class Catalog:
    """Time-sorted events over an observation window.

    Events are re-sorted on construction using the deterministic tie-break
    (time ascending, magnitude descending, input order), so likelihoods are
    reproducible regardless of input order.

    Args:
        events: events to include; each must lie inside ``[t1, t2]``.
        t1: window start (days).
        t2: window end (days), strictly greater than ``t1``.
        m0: completeness magnitude; every event must satisfy
            ``magnitude >= m0``.
    """

    events: tuple[Event, ...]
    t1: float
    t2: float
    m0: float

    def __post_init__(self):
        if not (math.isfinite(self.t1) and math.isfinite(self.t2)):
            raise InvalidWindowError("window bounds must be finite")
        if not self.t1 < self.t2:
            raise InvalidWindowError(
                f"window start must precede window end, got [{self.t1}, {self.t2}]"
            )
        ordered = tuple(ev for _, ev in sorted(enumerate(self.events), key=_sort_key))
        object.__setattr__(self, "events", ordered)
        for ev in ordered:
            if not (self.t1 <= ev.time <= self.t2):
                raise InvalidWindowError(
                    f"event at t={ev.time} outside window [{self.t1}, {self.t2}]"
                )
            if ev.magnitude < self.m0:
                raise ValueError(
                    f"event magnitude {ev.magnitude} below completeness {self.m0}"
                )

    def __len__(self) -> int:
        return len(self.events)

    @property
    def duration(self) -> float:
        return self.t2 - self.t1

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([ev.time for ev in self.events], dtype=float)

    @cached_property
    def magnitudes(self) -> np.ndarray:
        return np.array([ev.magnitude for ev in self.events], dtype=float)

    @classmethod
    def from_arrays(cls, times, magnitudes, t1: float, t2: float, m0: float) -> "Catalog":
        events = tuple(Event(float(t), float(m)) for t, m in zip(times, magnitudes))
        return cls(events, float(t1), float(t2), float(m0))


@dataclass(frozen=True)
class CatalogSplit:
    """A catalogue split at a mainshock for train/forecast workflows.

    ``training`` holds the events strictly before the mainshock;
    ``history`` additionally includes the mainshock itself (it conditions
    forecasts but is excluded from model training). ``forecast_window``
    starts at the mainshock time.
    """

    training: Catalog
    history: Catalog
    forecast_window: tuple[float, float]
    mainshock: Event


def parse_catalog(text: str, m0: float, t1: float, t2: float) -> Catalog:
    """Parse CSV catalogue content into a :class:`Catalog`.

    The expected format is a ``time,magnitude`` header followed by one event
    per row (decimal point, comma separated, LF or CRLF). Events are filtered
    to ``magnitude >= m0`` and ``time`` within ``[t1, t2]``, then sorted.

    Args:
        text: CSV content.
        m0: completeness magnitude used as the filter threshold.
        t1: window start (days).
        t2: window end (days).

    Returns:
        The filtered, sorted catalogue.

    Raises:
        CatalogParseError: on a missing/incorrect header or a malformed row
            (the error carries the 1-based line number).
        InvalidWindowError: if ``t1 >= t2``.
    """
    if t1 >= t2:
        raise InvalidWindowError(f"invalid window: t1={t1} must be < t2={t2}")
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise CatalogParseError("empty input, expected 'time,magnitude' header")
    header = tuple(col.strip().lstrip("﻿") for col in rows[0])
    if header != CSV_HEADER:
        raise CatalogParseError(
            f"expected header 'time,magnitude', got {','.join(rows[0])!r}", line=1
        )
    events = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue  # tolerate trailing blank lines
        if len(row) != 2:
            raise CatalogParseError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            time = float(row[0])
            magnitude = float(row[1])
        except ValueError as exc:
            raise CatalogParseError(str(exc), line=lineno) from None
        if not (math.isfinite(time) and math.isfinite(magnitude)):
            raise CatalogParseError("non-finite value", line=lineno)
        if magnitude >= m0 and t1 <= time <= t2:
            events.append(Event(time, magnitude))
    return Catalog(tuple(events), t1, t2, m0)


def serialize_catalog(cat: Catalog) -> str:
    """Render a catalogue as CSV text; floats use round-trippable repr."""
    lines = [",".join(CSV_HEADER)]
    lines.extend(f"{ev.time!r},{ev.magnitude!r}" for ev in cat.events)
    return "\n".join(lines) + "\n"


def read_catalog(path, m0: float, t1: float, t2: float) -> Catalog:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_catalog(fh.read(), m0, t1, t2)


def write_catalog(path, cat: Catalog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_catalog(cat))


def split_at_mainshock(cat: Catalog, threshold: float, k: int = 1) -> CatalogSplit:
    """Split a catalogue at its k-th mainshock.

    A mainshock is an event with ``magnitude >= threshold``; ``k`` is the
    1-based ordinal among those, in time order. The training catalogue
    contains events strictly before the mainshock time; the history
    catalogue adds the mainshock itself.

    Raises:
        InsufficientDataError: if fewer than ``k`` mainshocks exist (the
            message names the available count), or the mainshock coincides
            with the window start so no training window remains.
    """
    if k < 1:
        raise ValueError(f"mainshock ordinal must be >= 1, got {k}")
    candidates = [ev for ev in cat.events if ev.magnitude >= threshold]
    if len(candidates) < k:
        raise InsufficientDataError(
            f"{len(candidates)} mainshocks available with magnitude >= {threshold}, "
            f"requested #{k}"
        )
    mainshock = candidates[k - 1]
    if mainshock.time <= cat.t1:
        raise InvalidWindowError(
            f"mainshock at t={mainshock.time} leaves no training window after "
            f"t1={cat.t1}"
        )
    training_events = tuple(ev for ev in cat.events if ev.time < mainshock.time)
    training = Catalog(training_events, cat.t1, mainshock.time, cat.m0)
    history = Catalog(training_events + (mainshock,), cat.t1, mainshock.time, cat.m0)
    return CatalogSplit(
        training=training,
        history=history,
        forecast_window=(mainshock.time, cat.t2),
        mainshock=mainshock,
    )


def inter_event_times(cat: Catalog) -> np.ndarray:
    """Durations between consecutive events, in catalogue order.

    Returns ``n - 1`` differences for an ``n``-event catalogue. Differences
    are positive except for exact time ties, which yield zeros.

    Raises:
        InsufficientDataError: with fewer than 2 events.
    """
    if len(cat) < 2:
        raise InsufficientDataError(
            f"need at least 2 events for inter-event times, got {len(cat)}"
        )
    return np.diff(cat.times)


def merge_events(cat: Catalog, extra: Iterable[Event]) -> Catalog:
    """Catalogue with additional events inserted (window/threshold unchanged)."""
    return Catalog(cat.events + tuple(extra), cat.t1, cat.t2, cat.m0)


def as_events(obj) -> tuple[Event, ...]:
    """Normalize a history argument (None, Catalog, or event sequence)."""
    if obj is None:
        return ()
    if isinstance(obj, Catalog):
        return obj.events
    events = tuple(obj)
    if not all(isinstance(ev, Event) for ev in events):
        raise TypeError("history must be a Catalog or a sequence of Event")
    return events
