"""Scoring generated variations against their originals.

Each generated variation yields one :class:`OutcomeRecord`: did the
difficulty model judge it easier, similar or harder than the original
piece, and how far is it from the original in embedding space.  Records
aggregate into report rows per group (mining strategy and gap by default,
optionally genre or original level), rendered as CSV or Markdown.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "ReportError",
    "OUTCOMES",
    "classify_outcome",
    "OutcomeRecord",
    "ReportRow",
    "aggregate",
    "render_report",
    "save_records",
    "load_records",
]


class ReportError(Exception):
    pass


OUTCOMES = ("easier", "similar", "harder")


def classify_outcome(original_level: int, predicted_level: int) -> str:
    """Three-way comparison of a variation's level against its original."""
    for level in (original_level, predicted_level):
        if not 1 <= level <= 9:
            raise ReportError(f"level {level} outside 1..9")
    if predicted_level < original_level:
        return "easier"
    if predicted_level > original_level:
        return "harder"
    return "similar"


@dataclass(frozen=True)
class OutcomeRecord:
    piece: str
    variation: str
    original_level: int
    predicted_level: int
    outcome: str
    distance: float
    genre: str = ""
    strategy: str = ""
    gap: int = 0

    def __post_init__(self) -> None:
        expected = classify_outcome(self.original_level, self.predicted_level)
        if self.outcome != expected:
            raise ReportError(
                f"outcome {self.outcome!r} contradicts levels "
                f"{self.original_level}->{self.predicted_level} ({expected})")

    @classmethod
    def build(cls, piece: str, variation: str, original_level: int,
              predicted_level: int, distance: float, genre: str = "",
              strategy: str = "", gap: int = 0) -> "OutcomeRecord":
        return cls(piece=piece, variation=variation,
                   original_level=original_level, predicted_level=predicted_level,
                   outcome=classify_outcome(original_level, predicted_level),
                   distance=distance, genre=genre, strategy=strategy, gap=gap)


@dataclass(frozen=True)
class ReportRow:
    group_fields: tuple[str, ...]
    group: tuple
    easier_pct: float
    similar_pct: float
    harder_pct: float
    mean_distance: float
    count: int


def aggregate(records: Sequence[OutcomeRecord],
              group_by: Sequence[str] = ("strategy", "gap")) -> list[ReportRow]:
    """One row per observed group, sorted by group key.

    Outcome percentages are allocated in tenths of a percent by largest
    remainder, so each row's three percentages sum to exactly 100.0 even
    after rounding.  Groups with no records simply do not appear.
    """
    if not records:
        raise ReportError("cannot aggregate zero records")
    fields = tuple(group_by)
    valid = set(OutcomeRecord.__dataclass_fields__)
    unknown = [f for f in fields if f not in valid]
    if unknown:
        raise ReportError(f"unknown group fields {unknown}")
    groups: dict[tuple, list[OutcomeRecord]] = {}
    for rec in records:
        key = tuple(getattr(rec, f) for f in fields)
        groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        recs = groups[key]
        counts = {o: sum(1 for r in recs if r.outcome == o) for o in OUTCOMES}
        pcts = _largest_remainder([counts[o] / len(recs) * 100.0 for o in OUTCOMES])
        rows.append(ReportRow(
            group_fields=fields, group=key,
            easier_pct=pcts[0], similar_pct=pcts[1], harder_pct=pcts[2],
            mean_distance=float(np.mean([r.distance for r in recs])),
            count=len(recs)))
    return rows


def _largest_remainder(percentages: Sequence[float]) -> list[float]:
    """Round to one decimal so the total stays exactly 100.0."""
    scaled = [p * 10.0 for p in percentages]
    floors = [int(np.floor(s)) for s in scaled]
    shortfall = 1000 - sum(floors)
    remainders = sorted(range(len(scaled)),
                        key=lambda i: (floors[i] - scaled[i], i))
    out = list(floors)
    for i in remainders[:shortfall]:
        out[i] += 1
    return [v / 10.0 for v in out]


def render_report(rows: Sequence[ReportRow], format: str = "csv") -> str:
    """CSV or Markdown with columns: group fields, then ↓, ∼, ↑, distance."""
    if format not in ("csv", "markdown"):
        raise ReportError(f"unknown format {format!r}")
    fields = rows[0].group_fields if rows else ("strategy", "gap")
    header = list(fields) + ["↓", "∼", "↑", "distance"]
    body = []
    for row in rows:
        if row.group_fields != tuple(fields):
            raise ReportError("rows mix different groupings")
        body.append([str(v) for v in row.group]
                    + [f"{row.easier_pct:.1f}", f"{row.similar_pct:.1f}",
                       f"{row.harder_pct:.1f}", f"{row.mean_distance:.3f}"])
    if format == "csv":
        lines = [",".join(header)] + [",".join(cells) for cells in body]
        return "\n".join(lines) + "\n"
    widths = [max(len(header[c]), *(len(cells[c]) for cells in body)) if body
              else len(header[c]) for c in range(len(header))]
    def fmt(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    lines = [fmt(header),
             "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines.extend(fmt(cells) for cells in body)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Interchange format

def save_records(path: str, records: Iterable[OutcomeRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def load_records(path: str) -> list[OutcomeRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(OutcomeRecord(**rec))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ReportError(f"{path}:{line_no}: bad record: {exc}") from exc
    return out
